//! Local equirectangular projection and grid geometry shared by the
//! simulator, the gateway path-loss model, and the frost analytics.
//!
//! All distances use an equirectangular approximation around the grid
//! origin: `dx = R·Δlon·cos(lat₀)`, `dy = R·Δlat`. For fields below a few
//! kilometers across, the error against a geodesic is under 0.01%, far
//! below the cell size of any scenario here.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A rows × cols grid of square cells anchored at a geographic origin.
///
/// The origin is the center of cell (0, 0); row indices grow northward and
/// column indices grow eastward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    pub origin: LatLon,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, cell_size_m: f64, origin: LatLon) -> Self {
        Self {
            rows,
            cols,
            cell_size_m,
            origin,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.rows >= 1 && self.cols >= 1 && self.cell_size_m > 0.0 && self.origin.is_valid()
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols
    }

    /// Row-major index of a cell. Device-independent, so it can key
    /// deterministic per-cell noise streams.
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Geographic position of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> LatLon {
        let north_m = row as f64 * self.cell_size_m;
        let east_m = col as f64 * self.cell_size_m;
        self.offset(self.origin, east_m, north_m)
    }

    /// Position in local meters (east, north) relative to the origin.
    pub fn local_xy(&self, p: LatLon) -> (f64, f64) {
        let lat0 = self.origin.lat.to_radians();
        let x = (p.lon - self.origin.lon).to_radians() * lat0.cos() * EARTH_RADIUS_M;
        let y = (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    /// Distance in meters between two points under the grid's projection.
    pub fn distance_m(&self, a: LatLon, b: LatLon) -> f64 {
        let (ax, ay) = self.local_xy(a);
        let (bx, by) = self.local_xy(b);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    fn offset(&self, from: LatLon, east_m: f64, north_m: f64) -> LatLon {
        let lat = from.lat + (north_m / EARTH_RADIUS_M).to_degrees();
        let lon = from.lon + (east_m / (EARTH_RADIUS_M * from.lat.to_radians().cos())).to_degrees();
        LatLon::new(lat, lon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(4, 4, 10.0, LatLon::new(47.5, 16.4))
    }

    #[test]
    fn cell_center_roundtrips_through_local_xy() {
        let g = grid();
        for row in 0..g.rows {
            for col in 0..g.cols {
                let (x, y) = g.local_xy(g.cell_center(row, col));
                assert!((x - col as f64 * 10.0).abs() < 1e-6, "col {col}: x={x}");
                assert!((y - row as f64 * 10.0).abs() < 1e-6, "row {row}: y={y}");
            }
        }
    }

    #[test]
    fn distance_between_adjacent_cells_is_cell_size() {
        let g = grid();
        let d = g.distance_m(g.cell_center(0, 0), g.cell_center(0, 1));
        assert!((d - 10.0).abs() < 1e-6, "east neighbor: {d}");
        let d = g.distance_m(g.cell_center(0, 0), g.cell_center(1, 0));
        assert!((d - 10.0).abs() < 1e-6, "north neighbor: {d}");
    }

    #[test]
    fn contains_and_index() {
        let g = grid();
        assert!(g.contains(3, 3));
        assert!(!g.contains(4, 0));
        assert_eq!(g.cell_index(1, 2), 6);
    }

    #[test]
    fn latlon_validation() {
        assert!(LatLon::new(47.5, 16.4).is_valid());
        assert!(!LatLon::new(91.0, 0.0).is_valid());
        assert!(!LatLon::new(0.0, 181.0).is_valid());
    }
}

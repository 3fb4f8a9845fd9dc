//! Consumer-side frost analytics: IDW interpolation of the field
//! temperature from contracted records, cold-zone detection, cooling-trend
//! extrapolation, and alert assembly.
//!
//! All operations are pure; per-cell interpolation may be parallelized by
//! callers without changing results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GridSpec;
use crate::provider::SensorRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostConfig {
    /// Alert threshold in °C. Crop-specific and always an explicit input —
    /// there is no safe default.
    pub critical_temp_c: f64,
    /// IDW power parameter p (> 0).
    pub idw_power: f64,
    /// Queries closer than this to a sensor snap to the sensor value.
    pub snap_epsilon_m: f64,
    /// Readings per sensor feeding the cooling-trend line (≥ 2).
    pub trend_window: usize,
}

impl FrostConfig {
    pub fn new(critical_temp_c: f64) -> Self {
        Self {
            critical_temp_c,
            idw_power: 2.0,
            snap_epsilon_m: 0.5,
            trend_window: 6,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.idw_power.is_finite() || self.idw_power <= 0.0 {
            return Err("idw_power must be > 0".into());
        }
        if self.snap_epsilon_m < 0.0 {
            return Err("snap_epsilon_m must be >= 0".into());
        }
        if self.trend_window < 2 {
            return Err("trend_window must be >= 2".into());
        }
        Ok(())
    }
}

/// One sensor's latest temperature at a known position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub device_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub temperature_c: f64,
    pub timestamp_s: u64,
}

impl Reading {
    pub fn from_record(record: &SensorRecord) -> Self {
        Self {
            device_id: record.device_id,
            lat: record.lat,
            lon: record.lon,
            temperature_c: record.temperature_c(),
            timestamp_s: record.timestamp_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrostError {
    #[error("no readings available")]
    NoReadings,
    #[error("need at least 2 readings for a trend, got {0}")]
    InsufficientData(usize),
}

/// Interpolated per-cell temperatures, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub rows: usize,
    pub cols: usize,
    pub temps_c: Vec<f64>,
}

impl Snapshot {
    pub fn temp(&self, row: usize, col: usize) -> f64 {
        self.temps_c[row * self.cols + col]
    }

    pub fn min_temp(&self) -> f64 {
        self.temps_c.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV export with a `row,col,temp_c` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,temp_c\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                out.push_str(&format!("{row},{col},{}\n", self.temp(row, col)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneBounds {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

/// A 4-connected set of cells at or below the critical threshold —
/// the footprint for localized countermeasures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationZone {
    pub zone_id: u32,
    /// Member cells, row-major order.
    pub cells: Vec<(usize, usize)>,
    pub bounds: ZoneBounds,
    pub min_temp_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostAlert {
    pub at: u64,
    pub zones: Vec<MitigationZone>,
    pub min_temp_c: f64,
    /// Zone cells over total cells, in [0, 1].
    pub coverage_fraction: f64,
    /// Predicted seconds until each sensor crosses the threshold: 0 when
    /// already at or below it, absent value when the trend is flat/warming
    /// or the history is too short.
    pub eta_s: BTreeMap<u64, Option<u64>>,
}

/// Inverse-distance-weighted estimate at a query point (local meters).
///
/// If any reading lies within `snap_epsilon_m`, the nearest one wins (ties
/// by lowest device id); a reading at zero distance always snaps. Otherwise
/// `T = Σ d_i^-p·T_i / Σ d_i^-p`, a convex combination of the readings;
/// the result is clamped to the reading range so the bound holds exactly
/// even when the division rounds by an ulp.
pub fn idw_interpolate(
    query_xy: (f64, f64),
    readings: &[(f64, f64, f64, u64)], // (x, y, temp_c, device_id)
    cfg: &FrostConfig,
) -> Result<f64, FrostError> {
    if readings.is_empty() {
        return Err(FrostError::NoReadings);
    }
    let mut nearest: Option<(f64, u64, f64)> = None; // (distance, device_id, temp)
    for &(x, y, temp, device_id) in readings {
        let d = ((query_xy.0 - x).powi(2) + (query_xy.1 - y).powi(2)).sqrt();
        let closer = match nearest {
            None => true,
            Some((best_d, best_id, _)) => d < best_d || (d == best_d && device_id < best_id),
        };
        if closer {
            nearest = Some((d, device_id, temp));
        }
    }
    let (best_d, _, best_temp) = nearest.expect("readings non-empty");
    if best_d <= cfg.snap_epsilon_m || best_d == 0.0 {
        return Ok(best_temp);
    }

    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    let mut min_temp = f64::INFINITY;
    let mut max_temp = f64::NEG_INFINITY;
    for &(x, y, temp, _) in readings {
        let d = ((query_xy.0 - x).powi(2) + (query_xy.1 - y).powi(2)).sqrt();
        let w = d.powf(-cfg.idw_power);
        weight_sum += w;
        weighted += w * temp;
        min_temp = min_temp.min(temp);
        max_temp = max_temp.max(temp);
    }
    Ok((weighted / weight_sum).clamp(min_temp, max_temp))
}

/// Per-device latest record with `timestamp_s <= at`, as readings.
pub fn latest_readings(records: &[SensorRecord], at: u64) -> Vec<Reading> {
    let mut latest: BTreeMap<u64, &SensorRecord> = BTreeMap::new();
    for record in records.iter().filter(|r| r.timestamp_s <= at) {
        match latest.get(&record.device_id) {
            Some(existing)
                if (existing.timestamp_s, existing.frame_counter)
                    >= (record.timestamp_s, record.frame_counter) => {}
            _ => {
                latest.insert(record.device_id, record);
            }
        }
    }
    latest.values().map(|r| Reading::from_record(r)).collect()
}

/// Interpolates every cell center from the given readings.
pub fn snapshot_from_readings(
    grid: &GridSpec,
    readings: &[Reading],
    cfg: &FrostConfig,
) -> Result<Snapshot, FrostError> {
    if readings.is_empty() {
        return Err(FrostError::NoReadings);
    }
    let samples: Vec<(f64, f64, f64, u64)> = readings
        .iter()
        .map(|r| {
            let (x, y) = grid.local_xy(crate::geo::LatLon::new(r.lat, r.lon));
            (x, y, r.temperature_c, r.device_id)
        })
        .collect();
    let mut temps = Vec::with_capacity(grid.cell_count());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let center = grid.cell_center(row, col);
            let query = grid.local_xy(center);
            temps.push(idw_interpolate(query, &samples, cfg)?);
        }
    }
    Ok(Snapshot {
        rows: grid.rows,
        cols: grid.cols,
        temps_c: temps,
    })
}

/// Field snapshot at time `at`: selects each sensor's latest record with
/// `timestamp_s <= at` and interpolates every cell center.
pub fn field_snapshot(
    grid: &GridSpec,
    records: &[SensorRecord],
    cfg: &FrostConfig,
    at: u64,
) -> Result<Snapshot, FrostError> {
    snapshot_from_readings(grid, &latest_readings(records, at), cfg)
}

/// 4-connected components of `{cells : temp <= threshold}`, with zone ids
/// assigned in row-major order of each zone's first cell.
pub fn detect_zones(snapshot: &Snapshot, threshold: f64) -> Vec<MitigationZone> {
    let (rows, cols) = (snapshot.rows, snapshot.cols);
    let cold = |r: usize, c: usize| snapshot.temp(r, c) <= threshold;
    let mut visited = vec![false; rows * cols];
    let mut zones = Vec::new();

    for start_row in 0..rows {
        for start_col in 0..cols {
            let idx = start_row * cols + start_col;
            if visited[idx] || !cold(start_row, start_col) {
                continue;
            }
            let mut cells = Vec::new();
            let mut stack = vec![(start_row, start_col)];
            visited[idx] = true;
            while let Some((r, c)) = stack.pop() {
                cells.push((r, c));
                let mut push = |nr: usize, nc: usize| {
                    let nidx = nr * cols + nc;
                    if !visited[nidx] && cold(nr, nc) {
                        visited[nidx] = true;
                        stack.push((nr, nc));
                    }
                };
                if r > 0 {
                    push(r - 1, c);
                }
                if r + 1 < rows {
                    push(r + 1, c);
                }
                if c > 0 {
                    push(r, c - 1);
                }
                if c + 1 < cols {
                    push(r, c + 1);
                }
            }
            cells.sort();
            let bounds = ZoneBounds {
                min_row: cells.iter().map(|&(r, _)| r).min().expect("non-empty"),
                min_col: cells.iter().map(|&(_, c)| c).min().expect("non-empty"),
                max_row: cells.iter().map(|&(r, _)| r).max().expect("non-empty"),
                max_col: cells.iter().map(|&(_, c)| c).max().expect("non-empty"),
            };
            let min_temp_c = cells
                .iter()
                .map(|&(r, c)| snapshot.temp(r, c))
                .fold(f64::INFINITY, f64::min);
            zones.push(MitigationZone {
                zone_id: zones.len() as u32,
                cells,
                bounds,
                min_temp_c,
            });
        }
    }
    zones
}

/// Least-squares cooling trend over the last `trend_window` readings of one
/// sensor, extrapolated to the threshold crossing.
///
/// Returns `Some(0)` when the latest value is already at or below the
/// threshold, `None` when the fitted slope is flat or warming, otherwise
/// `Some(seconds)` measured from the last reading.
pub fn cooling_eta(
    history: &[(u64, f64)],
    threshold: f64,
    trend_window: usize,
) -> Result<Option<u64>, FrostError> {
    if history.len() < 2 {
        return Err(FrostError::InsufficientData(history.len()));
    }
    let window = &history[history.len().saturating_sub(trend_window)..];
    let (t_last, temp_last) = *window.last().expect("window non-empty");
    if temp_last <= threshold {
        return Ok(Some(0));
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|&(t, _)| t as f64).sum::<f64>() / n;
    let mean_y = window.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, y) in window {
        let dt = t as f64 - mean_t;
        num += dt * (y - mean_y);
        den += dt * dt;
    }
    if den == 0.0 {
        // all readings share one timestamp; no usable trend
        return Ok(None);
    }
    let slope = num / den;
    if slope >= 0.0 {
        return Ok(None);
    }
    let eta = (threshold - temp_last) / slope;
    let _ = t_last;
    Ok(Some(eta.round() as u64))
}

/// Snapshot, zones, and the alert (if any) from one analysis pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldAnalysis {
    pub snapshot: Snapshot,
    pub zones: Vec<MitigationZone>,
    pub alert: Option<FrostAlert>,
}

/// Full analysis: snapshot → zones → alert. The alert is emitted iff at
/// least one cell is at or below the critical threshold.
pub fn analyze_field(
    grid: &GridSpec,
    records: &[SensorRecord],
    cfg: &FrostConfig,
    at: u64,
) -> Result<FieldAnalysis, FrostError> {
    let snapshot = field_snapshot(grid, records, cfg, at)?;
    let zones = detect_zones(&snapshot, cfg.critical_temp_c);
    if zones.is_empty() {
        return Ok(FieldAnalysis {
            snapshot,
            zones,
            alert: None,
        });
    }
    let zone_cells: usize = zones.iter().map(|z| z.cells.len()).sum();
    let coverage_fraction = zone_cells as f64 / snapshot.temps_c.len() as f64;

    let mut histories: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for record in records.iter().filter(|r| r.timestamp_s <= at) {
        histories
            .entry(record.device_id)
            .or_default()
            .push((record.timestamp_s, record.temperature_c()));
    }
    let mut eta_s = BTreeMap::new();
    for (device_id, mut history) in histories {
        history.sort_by_key(|&(t, _)| t);
        history.dedup_by_key(|&mut (t, _)| t);
        let eta = cooling_eta(&history, cfg.critical_temp_c, cfg.trend_window).unwrap_or(None);
        eta_s.insert(device_id, eta);
    }

    let alert = Some(FrostAlert {
        at,
        min_temp_c: snapshot.min_temp(),
        coverage_fraction,
        zones: zones.clone(),
        eta_s,
    });
    Ok(FieldAnalysis {
        snapshot,
        zones,
        alert,
    })
}

/// Convenience wrapper over [`analyze_field`] when only the alert matters.
pub fn build_alert(
    grid: &GridSpec,
    records: &[SensorRecord],
    cfg: &FrostConfig,
    at: u64,
) -> Result<Option<FrostAlert>, FrostError> {
    analyze_field(grid, records, cfg, at).map(|analysis| analysis.alert)
}

/// Character map of the zones for terminal output: '.' above threshold,
/// zone ids rendered 0-9 then a-z, '#' beyond that.
pub fn zone_map_text(snapshot: &Snapshot, zones: &[MitigationZone]) -> String {
    let mut chars = vec![b'.'; snapshot.rows * snapshot.cols];
    for zone in zones {
        let glyph = match zone.zone_id {
            0..=9 => b'0' + zone.zone_id as u8,
            10..=35 => b'a' + (zone.zone_id - 10) as u8,
            _ => b'#',
        };
        for &(r, c) in &zone.cells {
            chars[r * snapshot.cols + c] = glyph;
        }
    }
    let mut out = String::new();
    for row in 0..snapshot.rows {
        let line = &chars[row * snapshot.cols..(row + 1) * snapshot.cols];
        out.push_str(std::str::from_utf8(line).expect("ascii"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;

    fn cfg(threshold: f64) -> FrostConfig {
        FrostConfig::new(threshold)
    }

    #[test]
    fn idw_single_reading_is_identity() {
        let readings = [(50.0, 50.0, 3.0, 1)];
        for query in [(0.0, 0.0), (100.0, 12.0), (50.0, 49.0)] {
            let t = idw_interpolate(query, &readings, &cfg(0.0)).unwrap();
            assert_eq!(t, 3.0);
        }
    }

    #[test]
    fn idw_equidistant_readings_average() {
        let readings = [(0.0, 0.0, 0.0, 1), (10.0, 0.0, 2.0, 2)];
        let t = idw_interpolate((5.0, 0.0), &readings, &cfg(0.0)).unwrap();
        assert!((t - 1.0).abs() < 1e-12, "got {t}");
    }

    #[test]
    fn idw_hand_example() {
        // d=1 m at 0.0 °C and d=2 m at 3.0 °C with p=2:
        // (1·0 + 0.25·3)/1.25 = 0.6 °C, confirmed by hand before this
        // module was built.
        let readings = [(1.0, 0.0, 0.0, 1), (-2.0, 0.0, 3.0, 2)];
        let t = idw_interpolate((0.0, 0.0), &readings, &cfg(0.0)).unwrap();
        assert!((t - 0.6).abs() < 1e-12, "got {t}");
    }

    #[test]
    fn idw_snaps_to_nearest_within_epsilon() {
        let mut c = cfg(0.0);
        c.snap_epsilon_m = 0.5;
        let readings = [(0.3, 0.0, -7.0, 5), (10.0, 0.0, 4.0, 1)];
        assert_eq!(idw_interpolate((0.0, 0.0), &readings, &c).unwrap(), -7.0);
        // tie at equal distance: lowest device id wins
        let tied = [(0.2, 0.0, 1.0, 9), (-0.2, 0.0, 2.0, 3)];
        assert_eq!(idw_interpolate((0.0, 0.0), &tied, &c).unwrap(), 2.0);
    }

    #[test]
    fn idw_zero_distance_snaps_even_with_zero_epsilon() {
        let mut c = cfg(0.0);
        c.snap_epsilon_m = 0.0;
        let readings = [(0.0, 0.0, -3.0, 1), (5.0, 0.0, 10.0, 2)];
        assert_eq!(idw_interpolate((0.0, 0.0), &readings, &c).unwrap(), -3.0);
    }

    #[test]
    fn idw_is_a_convex_combination() {
        let readings = [
            (0.0, 0.0, -5.0, 1),
            (20.0, 3.0, 2.5, 2),
            (7.0, 18.0, 0.25, 3),
        ];
        for qx in 0..6 {
            for qy in 0..6 {
                let t = idw_interpolate((qx as f64 * 4.0, qy as f64 * 4.0), &readings, &cfg(0.0))
                    .unwrap();
                assert!((-5.0..=2.5).contains(&t), "({qx},{qy}) escaped bounds: {t}");
            }
        }
    }

    #[test]
    fn idw_no_readings_errors() {
        assert_eq!(
            idw_interpolate((0.0, 0.0), &[], &cfg(0.0)),
            Err(FrostError::NoReadings)
        );
    }

    fn grid_3x3() -> GridSpec {
        GridSpec::new(3, 3, 10.0, LatLon::new(47.5, 16.4))
    }

    fn record_at(
        grid: &GridSpec,
        device_id: u64,
        row: usize,
        col: usize,
        cdeg: i16,
        ts: u64,
    ) -> SensorRecord {
        let pos = grid.cell_center(row, col);
        SensorRecord {
            device_id,
            frame_counter: (ts / 100) as u32,
            timestamp_s: ts,
            temperature_cdeg: cdeg,
            lat: pos.lat,
            lon: pos.lon,
            elevation_m: 200.0,
            rssi_dbm: -70,
            ingest_seq: ts,
            gateway_id: "gw-1".into(),
        }
    }

    #[test]
    fn snapshot_uniform_readings_give_constant_field() {
        let grid = grid_3x3();
        let records = vec![
            record_at(&grid, 1, 0, 0, 500, 100),
            record_at(&grid, 2, 2, 2, 500, 100),
        ];
        let snapshot = field_snapshot(&grid, &records, &cfg(0.0), 200).unwrap();
        assert!(snapshot.temps_c.iter().all(|&t| (t - 5.0).abs() < 1e-9));
    }

    #[test]
    fn snapshot_cell_holding_a_sensor_snaps_to_it() {
        let grid = grid_3x3();
        let records = vec![
            record_at(&grid, 1, 0, 0, -300, 100),
            record_at(&grid, 2, 2, 2, 400, 100),
        ];
        let snapshot = field_snapshot(&grid, &records, &cfg(0.0), 200).unwrap();
        assert_eq!(snapshot.temp(0, 0), -3.0);
        assert_eq!(snapshot.temp(2, 2), 4.0);
    }

    #[test]
    fn snapshot_uses_latest_reading_per_device() {
        let grid = grid_3x3();
        let records = vec![
            record_at(&grid, 1, 0, 0, 100, 100),
            record_at(&grid, 1, 0, 0, -900, 500), // newer
            record_at(&grid, 1, 0, 0, 300, 900),  // after `at`
        ];
        let snapshot = field_snapshot(&grid, &records, &cfg(0.0), 600).unwrap();
        assert_eq!(snapshot.temp(0, 0), -9.0);
    }

    #[test]
    fn snapshot_matches_per_cell_oracle() {
        let grid = grid_3x3();
        let records = vec![
            record_at(&grid, 1, 0, 1, -150, 100),
            record_at(&grid, 2, 2, 0, 350, 100),
        ];
        let config = cfg(0.0);
        let snapshot = field_snapshot(&grid, &records, &config, 200).unwrap();
        // oracle: recompute each cell with a literal transcription of the
        // weight formula, independent of idw_interpolate's code path
        let sensors: Vec<(f64, f64, f64)> = records
            .iter()
            .map(|r| {
                let (x, y) = grid.local_xy(LatLon::new(r.lat, r.lon));
                (x, y, r.temperature_c())
            })
            .collect();
        for row in 0..3 {
            for col in 0..3 {
                let (qx, qy) = grid.local_xy(grid.cell_center(row, col));
                let mut snap = None;
                let mut num = 0.0;
                let mut den = 0.0;
                for &(x, y, temp) in &sensors {
                    let d = ((qx - x).powi(2) + (qy - y).powi(2)).sqrt();
                    if d <= config.snap_epsilon_m {
                        snap = Some(temp);
                    }
                    num += temp / d.powi(2);
                    den += 1.0 / d.powi(2);
                }
                let expected = snap.unwrap_or(num / den);
                let got = snapshot.temp(row, col);
                assert!(
                    (got - expected).abs() < 1e-12,
                    "cell ({row},{col}): {got} vs {expected}"
                );
            }
        }
    }

    fn snapshot_from(temps: &[f64], rows: usize, cols: usize) -> Snapshot {
        Snapshot {
            rows,
            cols,
            temps_c: temps.to_vec(),
        }
    }

    #[test]
    fn no_cold_cells_no_zones() {
        let s = snapshot_from(&[5.0; 9], 3, 3);
        assert!(detect_zones(&s, 0.0).is_empty());
    }

    #[test]
    fn single_cold_cell_single_zone() {
        let mut temps = vec![5.0; 9];
        temps[4] = -1.0;
        let zones = detect_zones(&snapshot_from(&temps, 3, 3), 0.0);
        assert_eq!(zones.len(), 1);
        assert_eq!(zones[0].cells, vec![(1, 1)]);
        assert_eq!(zones[0].min_temp_c, -1.0);
    }

    #[test]
    fn l_shape_plus_isolated_cell_make_two_zones() {
        // 4×4: an L along the left/bottom edge and an isolated cold corner
        //   C . . X
        //   C . . .
        //   C C . .
        //   . . . .
        let w = 5.0;
        let c = -2.0;
        #[rustfmt::skip]
        let temps = vec![
            c, w, w, c,
            c, w, w, w,
            c, c, w, w,
            w, w, w, w,
        ];
        let zones = detect_zones(&snapshot_from(&temps, 4, 4), 0.0);
        assert_eq!(zones.len(), 2);
        // brute-force oracle: recompute components by repeated scanning
        let oracle = flood_fill_oracle(&temps, 4, 4, 0.0);
        let got: Vec<Vec<(usize, usize)>> = zones.iter().map(|z| z.cells.clone()).collect();
        assert_eq!(got, oracle);
        // zone 0 starts at (0,0) L-shape, zone 1 is the far corner
        assert_eq!(zones[0].cells, vec![(0, 0), (1, 0), (2, 0), (2, 1)]);
        assert_eq!(zones[1].cells, vec![(0, 3)]);
        assert_eq!(
            zones[1].bounds,
            ZoneBounds {
                min_row: 0,
                min_col: 3,
                max_row: 0,
                max_col: 3
            }
        );
    }

    #[test]
    fn diagonal_cells_are_not_connected() {
        #[rustfmt::skip]
        let temps = vec![
            -1.0,  5.0,
             5.0, -1.0,
        ];
        let zones = detect_zones(&snapshot_from(&temps, 2, 2), 0.0);
        assert_eq!(zones.len(), 2, "4-connectivity must split diagonals");
    }

    /// Independent component labeling: iterative label propagation until
    /// fixpoint, no shared code with detect_zones.
    fn flood_fill_oracle(
        temps: &[f64],
        rows: usize,
        cols: usize,
        threshold: f64,
    ) -> Vec<Vec<(usize, usize)>> {
        let mut labels: Vec<Option<usize>> = temps
            .iter()
            .enumerate()
            .map(|(i, &t)| (t <= threshold).then_some(i))
            .collect();
        loop {
            let mut changed = false;
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    let Some(mut label) = labels[i] else { continue };
                    let mut consider = |ni: usize, labels: &[Option<usize>]| {
                        if let Some(other) = labels[ni] {
                            if other < label {
                                label = other;
                            }
                        }
                    };
                    if r > 0 {
                        consider(i - cols, &labels);
                    }
                    if r + 1 < rows {
                        consider(i + cols, &labels);
                    }
                    if c > 0 {
                        consider(i - 1, &labels);
                    }
                    if c + 1 < cols {
                        consider(i + 1, &labels);
                    }
                    if labels[i] != Some(label) {
                        labels[i] = Some(label);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for r in 0..rows {
            for c in 0..cols {
                if let Some(label) = labels[r * cols + c] {
                    groups.entry(label).or_default().push((r, c));
                }
            }
        }
        groups.into_values().collect()
    }

    #[test]
    fn zones_match_oracle_on_random_grids() {
        let mut rng = crate::rng::DetRng::new(0xF00D);
        for trial in 0..200 {
            let rows = 1 + (rng.next_range(16)) as usize;
            let cols = 1 + (rng.next_range(16)) as usize;
            let temps: Vec<f64> = (0..rows * cols)
                .map(|_| rng.next_f64() * 10.0 - 5.0)
                .collect();
            let zones = detect_zones(&snapshot_from(&temps, rows, cols), 0.0);
            let got: Vec<Vec<(usize, usize)>> = zones.iter().map(|z| z.cells.clone()).collect();
            let expected = flood_fill_oracle(&temps, rows, cols, 0.0);
            assert_eq!(got, expected, "trial {trial} on {rows}x{cols}");
        }
    }

    #[test]
    fn threshold_monotonicity() {
        let mut rng = crate::rng::DetRng::new(0xBEEF);
        let temps: Vec<f64> = (0..64).map(|_| rng.next_f64() * 8.0 - 4.0).collect();
        let s = snapshot_from(&temps, 8, 8);
        let mut prev_cells = usize::MAX;
        for threshold in [3.0, 1.0, 0.0, -1.0, -3.0] {
            let cells: usize = detect_zones(&s, threshold)
                .iter()
                .map(|z| z.cells.len())
                .sum();
            assert!(cells <= prev_cells, "lowering the threshold added cells");
            prev_cells = cells;
        }
    }

    #[test]
    fn eta_collinear_hand_example() {
        // (0 s, 2.0), (600 s, 1.5), (1200 s, 1.0) → slope −0.5/600 °C/s;
        // threshold 0 is reached 1200 s after the last reading.
        let history = [(0, 2.0), (600, 1.5), (1200, 1.0)];
        assert_eq!(cooling_eta(&history, 0.0, 6), Ok(Some(1200)));
    }

    #[test]
    fn eta_flat_trend_gives_none() {
        let history = [(0, 2.0), (600, 2.0), (1200, 2.0)];
        assert_eq!(cooling_eta(&history, 0.0, 6), Ok(None));
    }

    #[test]
    fn eta_already_below_threshold_is_zero() {
        let history = [(0, 2.0), (600, -0.5)];
        assert_eq!(cooling_eta(&history, 0.0, 6), Ok(Some(0)));
    }

    #[test]
    fn eta_insufficient_data() {
        assert_eq!(
            cooling_eta(&[(0, 2.0)], 0.0, 6),
            Err(FrostError::InsufficientData(1))
        );
    }

    #[test]
    fn eta_uses_only_the_trend_window() {
        // warming history followed by a sharp linear cooling tail; a window
        // of 3 sees only the tail
        let history = [(0, 0.0), (600, 5.0), (1200, 3.0), (1800, 2.0), (2400, 1.0)];
        let eta = cooling_eta(&history, 0.0, 3).unwrap().unwrap();
        assert_eq!(eta, 600);
    }

    #[test]
    fn alert_corner_frost_localizes() {
        let grid = grid_3x3();
        // one cold corner sensor, warm elsewhere
        let records = vec![
            record_at(&grid, 1, 0, 0, -300, 100),
            record_at(&grid, 2, 0, 2, 400, 100),
            record_at(&grid, 3, 2, 0, 400, 100),
            record_at(&grid, 4, 2, 2, 400, 100),
        ];
        let alert = build_alert(&grid, &records, &cfg(-1.0), 200)
            .unwrap()
            .expect("cold corner must alert");
        assert!(alert.coverage_fraction < 1.0);
        assert!(alert.coverage_fraction > 0.0);
        let cold_cells: Vec<(usize, usize)> =
            alert.zones.iter().flat_map(|z| z.cells.clone()).collect();
        assert!(cold_cells.contains(&(0, 0)));
        assert!(
            !cold_cells.contains(&(2, 2)),
            "warm opposite corner must stay out"
        );

        // threshold far below everything: no alert
        assert!(build_alert(&grid, &records, &cfg(-10.0), 200)
            .unwrap()
            .is_none());
    }

    #[test]
    fn alert_warm_field_is_none_and_no_readings_errors() {
        let grid = grid_3x3();
        let records = vec![record_at(&grid, 1, 1, 1, 800, 100)];
        assert!(build_alert(&grid, &records, &cfg(0.0), 200)
            .unwrap()
            .is_none());
        assert_eq!(
            build_alert(&grid, &[], &cfg(0.0), 200),
            Err(FrostError::NoReadings)
        );
    }

    #[test]
    fn csv_and_zone_map_formats() {
        let s = snapshot_from(&[1.0, -1.0, 2.0, 3.0], 2, 2);
        let csv = s.to_csv();
        assert!(csv.starts_with("row,col,temp_c\n"));
        assert!(csv.contains("0,1,-1\n"));
        assert_eq!(csv.lines().count(), 5);

        let zones = detect_zones(&s, 0.0);
        let map = zone_map_text(&s, &zones);
        assert_eq!(map, ".0\n..\n");
    }
}

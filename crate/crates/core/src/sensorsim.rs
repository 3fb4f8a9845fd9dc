//! Deterministic simulation of a field of temperature sensors.
//!
//! The ground-truth temperature at a cell is
//!
//! ```text
//! T(cell, t) = t_mean
//!            + diurnal_amp · sin(2π·(sod(t) − t_peak_s)/86400 + π/2)
//!            + Σ_events −rate·hours_active(t)·(1 + pooling_gain·(max_elev − elev)/max(1, elev_range))
//!            + noise_sigma · N(seed, cell_index, t)
//! ```
//!
//! where `sod(t) = t mod 86400` and `hours_active` grows linearly from the
//! event start and stops accumulating at the event end (radiative cooling is
//! approximated as linear in time; the accumulated deficit persists after
//! the event). Lower-lying cells cool faster — cold air pools downhill.
//!
//! Noise is counter-based: each (seed, cell, t) triple hashes to a standard
//! normal deviate through a fixed transform, so frames are reproducible
//! regardless of evaluation order. The noise stream is part of the scenario
//! compatibility contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GridSpec;
use crate::rng::splitmix64;
use crate::wire::UplinkFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Climate {
    /// Daily mean temperature, °C.
    pub t_mean_c: f64,
    /// Amplitude of the diurnal sine, °C (≥ 0).
    pub diurnal_amp_c: f64,
    /// Second-of-day of the daily maximum.
    pub t_peak_s: u64,
    /// Standard deviation of per-reading noise, °C (≥ 0).
    pub noise_sigma_c: f64,
}

/// A scripted radiation-frost event with elevation-based cold pooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrostEvent {
    pub start_s: u64,
    pub end_s: u64,
    pub cooling_rate_c_per_h: f64,
    /// Strength of the elevation dependence (0 = uniform cooling).
    pub pooling_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub grid: GridSpec,
    /// Per-cell elevation in meters, row-major, `rows × cols` entries.
    pub elevation_m: Vec<f64>,
    pub climate: Climate,
    pub frost_events: Vec<FrostEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cell ({0}, {1}) outside the field grid")]
    CellOutOfRange(usize, usize),
}

impl FieldModel {
    /// Checks the structural invariants; returns a human-readable reason on
    /// failure. Used by the scenario loader.
    pub fn validate(&self) -> Result<(), String> {
        if !self.grid.is_valid() {
            return Err(
                "grid must have rows, cols >= 1, positive cell size and a valid origin".into(),
            );
        }
        if self.elevation_m.len() != self.grid.cell_count() {
            return Err(format!(
                "elevation has {} entries, grid has {} cells",
                self.elevation_m.len(),
                self.grid.cell_count()
            ));
        }
        if self.climate.diurnal_amp_c < 0.0 {
            return Err("diurnal_amp_c must be >= 0".into());
        }
        if self.climate.noise_sigma_c < 0.0 {
            return Err("noise_sigma_c must be >= 0".into());
        }
        for (i, event) in self.frost_events.iter().enumerate() {
            if event.start_s >= event.end_s {
                return Err(format!("frost event {i}: start_s must be < end_s"));
            }
            if event.cooling_rate_c_per_h < 0.0 || event.pooling_gain < 0.0 {
                return Err(format!(
                    "frost event {i}: cooling rate and pooling gain must be >= 0"
                ));
            }
        }
        Ok(())
    }

    pub fn elevation(&self, row: usize, col: usize) -> f64 {
        self.elevation_m[self.grid.cell_index(row, col)]
    }

    fn elevation_stats(&self) -> (f64, f64) {
        let max = self.elevation_m.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.elevation_m.iter().cloned().fold(f64::MAX, f64::min);
        (max, max - min)
    }
}

/// A simulated sensor bound to one grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSensor {
    pub device_id: u64,
    pub row: usize,
    pub col: usize,
    /// Reporting period in seconds (> 0); reports fire at multiples of it.
    pub report_period_s: u64,
    /// Counter assigned to this sensor's next frame.
    pub next_counter: u32,
    pub battery_pct: u8,
}

/// Ground-truth temperature at a cell center, °C.
pub fn true_temperature(
    model: &FieldModel,
    row: usize,
    col: usize,
    t: u64,
    rng_seed: u64,
) -> Result<f64, SimError> {
    if !model.grid.contains(row, col) {
        return Err(SimError::CellOutOfRange(row, col));
    }
    let climate = &model.climate;

    let sod = (t % 86_400) as f64;
    let phase = std::f64::consts::TAU * (sod - climate.t_peak_s as f64) / 86_400.0
        + std::f64::consts::FRAC_PI_2;
    let diurnal = climate.diurnal_amp_c * phase.sin();

    let (max_elev, elev_range) = model.elevation_stats();
    let elev = model.elevation(row, col);

    let mut frost = 0.0;
    for event in &model.frost_events {
        if t < event.start_s {
            continue;
        }
        let active_until = t.min(event.end_s);
        let hours = (active_until - event.start_s) as f64 / 3600.0;
        let factor = 1.0 + event.pooling_gain * (max_elev - elev) / elev_range.max(1.0);
        frost -= event.cooling_rate_c_per_h * hours * factor;
    }

    let noise = if climate.noise_sigma_c > 0.0 {
        climate.noise_sigma_c * std_normal(rng_seed, model.grid.cell_index(row, col) as u64, t)
    } else {
        0.0
    };

    Ok(climate.t_mean_c + diurnal + frost + noise)
}

/// Standard normal deviate keyed by (seed, cell index, time): two splitmix64
/// hashes feed a Box-Muller transform. Fixed for all time — changing it
/// changes every scenario's byte-level output.
fn std_normal(seed: u64, cell_index: u64, t: u64) -> f64 {
    let u1 = unit_open(keyed_hash(seed, cell_index, t, 0));
    let u2 = unit_half_open(keyed_hash(seed, cell_index, t, 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn keyed_hash(seed: u64, cell_index: u64, t: u64, lane: u64) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    state ^= cell_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    acc ^= splitmix64(&mut state);
    state ^= t.rotate_left(32);
    acc ^= splitmix64(&mut state);
    state ^= lane;
    acc ^ splitmix64(&mut state)
}

/// Maps to (0, 1]: safe as the log argument in Box-Muller.
fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Maps to [0, 1).
fn unit_half_open(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// One scheduled frame emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub t: u64,
    pub device_id: u64,
    pub frame: UplinkFrame,
}

/// Expands the reporting schedule over `[t0, t1]` (both endpoints
/// inclusive). Reports fire at absolute times that are multiples of each
/// sensor's period; counters increase strictly per device; output is ordered
/// by `(t, device_id)`.
///
/// Temperatures are quantized to centi-degrees here, at the frame boundary;
/// downstream components only ever see quantized values.
pub fn emission_schedule(
    model: &FieldModel,
    sensors: &[SimSensor],
    rng_seed: u64,
    t0: u64,
    t1: u64,
) -> Result<Vec<Emission>, SimError> {
    assert!(t0 < t1, "horizon start must precede its end");
    let mut out = Vec::new();
    for sensor in sensors {
        let period = sensor.report_period_s;
        assert!(period > 0, "report_period_s must be > 0");
        let mut counter = sensor.next_counter;
        let first = t0.div_ceil(period) * period;
        let mut t = first;
        while t <= t1 {
            let temp_c = true_temperature(model, sensor.row, sensor.col, t, rng_seed)?;
            let temperature_cdeg = (temp_c * 100.0)
                .round()
                .clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            out.push(Emission {
                t,
                device_id: sensor.device_id,
                frame: UplinkFrame::new(
                    sensor.device_id,
                    counter,
                    t,
                    temperature_cdeg,
                    sensor.battery_pct,
                ),
            });
            counter = counter.wrapping_add(1);
            t += period;
        }
    }
    out.sort_by_key(|e| (e.t, e.device_id));
    Ok(out)
}

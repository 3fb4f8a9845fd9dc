//! Browser demo bindings.
//!
//! Three interactive operations behind a JSON-string ABI (simple to call
//! from hand-written JS, no glue framework needed):
//!
//! - [`simulate_field`] — the ground-truth temperature field of a scripted
//!   frost night, explorable over time, cooling rate, and cold pooling.
//! - [`analyze_field`] — what the consumer actually computes: sensor
//!   readings sampled off the truth (centi-degree quantized), IDW
//!   interpolation, and the mitigation zones at a chosen threshold.
//! - [`run_demo_scenario`] — a complete in-memory data-space run (enrol →
//!   offer → negotiate → countersign → transfer → alert, plus an intruder
//!   and a forged-key probe) returning the run report and the audit tail.
//!
//! Build with `wasm-pack build --target web` and open `www/index.html`
//! (see the README).

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

use orvicon_core::dataspace::MemberRole;
use orvicon_core::frost::{
    detect_zones, snapshot_from_readings, FrostConfig, MitigationZone, Reading, Snapshot,
};
use orvicon_core::geo::{GridSpec, LatLon};
use orvicon_core::harness::config::{
    CertificateConfig, ClimateConfig, ClockConfig, DecisionKind, ElevationSpec, FieldConfig,
    FrostEventConfig, FrostSection, GatewayConfig, LinkConfig, MemberConfig, OfferConfig,
    PolicyConfig, ProviderConfig, SensorConfig,
};
use orvicon_core::harness::{
    audit_to_jsonl, run_scenario, RunMode, ScenarioConfig, ScriptAction, ScriptStep,
};
use orvicon_core::sensorsim::{true_temperature, Climate, FieldModel, FrostEvent};

#[derive(Debug, Deserialize)]
struct FieldParams {
    rows: usize,
    cols: usize,
    #[serde(default = "default_cell_size")]
    cell_size_m: f64,
    t_mean_c: f64,
    #[serde(default)]
    diurnal_amp_c: f64,
    #[serde(default = "default_t_peak")]
    t_peak_s: u64,
    #[serde(default)]
    noise_sigma_c: f64,
    /// Elevation plane: base 200 m plus these gradients.
    #[serde(default)]
    elevation_per_row_m: f64,
    #[serde(default)]
    elevation_per_col_m: f64,
    #[serde(default)]
    frost: Option<FrostParams>,
    /// Simulation time (Unix seconds).
    t: u64,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct FrostParams {
    start_s: u64,
    end_s: u64,
    cooling_rate_c_per_h: f64,
    pooling_gain: f64,
}

#[derive(Debug, Deserialize)]
struct AnalyzeParams {
    #[serde(flatten)]
    field: FieldParams,
    /// Sensor cells as `[row, col]` pairs.
    sensors: Vec<(usize, usize)>,
    #[serde(default = "default_idw_power")]
    idw_power: f64,
    #[serde(default = "default_snap_epsilon")]
    snap_epsilon_m: f64,
    threshold_c: f64,
}

fn default_cell_size() -> f64 {
    10.0
}
fn default_t_peak() -> u64 {
    50_400
}
fn default_idw_power() -> f64 {
    2.0
}
fn default_snap_epsilon() -> f64 {
    0.5
}

#[derive(Debug, Serialize)]
struct FieldResult {
    rows: usize,
    cols: usize,
    temps_c: Vec<f64>,
    min_c: f64,
    max_c: f64,
}

#[derive(Debug, Serialize)]
struct AnalyzeResult {
    rows: usize,
    cols: usize,
    truth_c: Vec<f64>,
    snapshot_c: Vec<f64>,
    sensors: Vec<SensorSample>,
    zones: Vec<MitigationZone>,
    coverage_fraction: f64,
    min_c: f64,
    max_c: f64,
}

#[derive(Debug, Serialize)]
struct SensorSample {
    device_id: u64,
    row: usize,
    col: usize,
    temperature_c: f64,
}

fn build_model(p: &FieldParams) -> Result<FieldModel, String> {
    let grid = GridSpec::new(p.rows, p.cols, p.cell_size_m, LatLon::new(47.5, 16.4));
    let elevation_m = (0..p.rows)
        .flat_map(|r| {
            (0..p.cols).map(move |c| {
                200.0 + p.elevation_per_row_m * r as f64 + p.elevation_per_col_m * c as f64
            })
        })
        .collect();
    let model = FieldModel {
        grid,
        elevation_m,
        climate: Climate {
            t_mean_c: p.t_mean_c,
            diurnal_amp_c: p.diurnal_amp_c,
            t_peak_s: p.t_peak_s,
            noise_sigma_c: p.noise_sigma_c,
        },
        frost_events: p
            .frost
            .iter()
            .map(|f| FrostEvent {
                start_s: f.start_s,
                end_s: f.end_s,
                cooling_rate_c_per_h: f.cooling_rate_c_per_h,
                pooling_gain: f.pooling_gain,
            })
            .collect(),
    };
    model.validate()?;
    Ok(model)
}

fn truth_grid(model: &FieldModel, t: u64, seed: u64) -> Vec<f64> {
    let mut temps = Vec::with_capacity(model.grid.cell_count());
    for row in 0..model.grid.rows {
        for col in 0..model.grid.cols {
            temps.push(true_temperature(model, row, col, t, seed).expect("cell in grid"));
        }
    }
    temps
}

fn err_json(message: impl std::fmt::Display) -> String {
    serde_json::json!({"error": message.to_string()}).to_string()
}

/// Ground-truth temperature field at one instant. Input and output are JSON
/// strings; on bad input the result carries an `error` key.
#[wasm_bindgen]
pub fn simulate_field(params_json: &str) -> String {
    let params: FieldParams = match serde_json::from_str(params_json) {
        Ok(p) => p,
        Err(e) => return err_json(e),
    };
    let model = match build_model(&params) {
        Ok(m) => m,
        Err(e) => return err_json(e),
    };
    let temps_c = truth_grid(&model, params.t, params.seed);
    let min_c = temps_c.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_c = temps_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    serde_json::to_string(&FieldResult {
        rows: params.rows,
        cols: params.cols,
        temps_c,
        min_c,
        max_c,
    })
    .expect("result serializes")
}

/// Consumer-side view of the same field: quantized sensor samples, the IDW
/// snapshot, and the mitigation zones at the chosen threshold.
#[wasm_bindgen]
pub fn analyze_field(params_json: &str) -> String {
    let params: AnalyzeParams = match serde_json::from_str(params_json) {
        Ok(p) => p,
        Err(e) => return err_json(e),
    };
    let model = match build_model(&params.field) {
        Ok(m) => m,
        Err(e) => return err_json(e),
    };
    if params.sensors.is_empty() {
        return err_json("at least one sensor is required");
    }
    let truth_c = truth_grid(&model, params.field.t, params.field.seed);

    let mut sensors = Vec::new();
    let mut readings = Vec::new();
    for (i, &(row, col)) in params.sensors.iter().enumerate() {
        if !model.grid.contains(row, col) {
            return err_json(format!("sensor cell ({row}, {col}) outside the grid"));
        }
        // what a real frame would deliver: centi-degree quantization
        let exact = truth_c[model.grid.cell_index(row, col)];
        let quantized = (exact * 100.0).round() / 100.0;
        let pos = model.grid.cell_center(row, col);
        let device_id = 100 + i as u64;
        sensors.push(SensorSample {
            device_id,
            row,
            col,
            temperature_c: quantized,
        });
        readings.push(Reading {
            device_id,
            lat: pos.lat,
            lon: pos.lon,
            temperature_c: quantized,
            timestamp_s: params.field.t,
        });
    }

    let cfg = FrostConfig {
        critical_temp_c: params.threshold_c,
        idw_power: params.idw_power,
        snap_epsilon_m: params.snap_epsilon_m,
        trend_window: 6,
    };
    if let Err(e) = cfg.validate() {
        return err_json(e);
    }
    let snapshot: Snapshot = match snapshot_from_readings(&model.grid, &readings, &cfg) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let zones = detect_zones(&snapshot, params.threshold_c);
    let zone_cells: usize = zones.iter().map(|z| z.cells.len()).sum();
    let coverage_fraction = zone_cells as f64 / snapshot.temps_c.len() as f64;
    let min_c = snapshot
        .temps_c
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max_c = snapshot
        .temps_c
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    serde_json::to_string(&AnalyzeResult {
        rows: snapshot.rows,
        cols: snapshot.cols,
        truth_c,
        snapshot_c: snapshot.temps_c,
        sensors,
        zones,
        coverage_fraction,
        min_c,
        max_c,
    })
    .expect("result serializes")
}

/// A complete in-memory scenario: sensors → gateway → provider → data-space
/// negotiation → contracted transfer → frost alert, plus an unenrolled
/// intruder and a forged-key probe that the connector must reject. Returns
/// `{report, audit_tail, audit_jsonl_lines}` as JSON.
#[wasm_bindgen]
pub fn run_demo_scenario(seed: u32) -> String {
    let cfg = demo_scenario_config(u64::from(seed));
    match run_scenario(&cfg, RunMode::InProcess) {
        Ok(output) => {
            let report: serde_json::Value =
                serde_json::from_str(&output.report.to_canonical_json()).expect("report is JSON");
            let audit_tail: Vec<serde_json::Value> = output
                .audit
                .iter()
                .rev()
                .take(12)
                .rev()
                .map(|r| serde_json::to_value(r).expect("audit record serializes"))
                .collect();
            serde_json::json!({
                "report": report,
                "audit_tail": audit_tail,
                "audit_records": output.audit.len(),
                "audit_jsonl": audit_to_jsonl(&output.audit),
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}

fn demo_scenario_config(seed: u64) -> ScenarioConfig {
    let member = |id: &str, role: MemberRole, cert: &str, auto: bool| MemberConfig {
        member_id: id.into(),
        display_name: id.into(),
        role,
        cert_id: cert.into(),
        auto_enroll: auto,
    };
    let cert = |id: &str| CertificateConfig {
        cert_id: id.into(),
        connector_build_hash: "demo".into(),
        issued_by: "testlab".into(),
        valid_until: 4_000_000_000,
    };
    let sensor = |device_id: u64, row: usize, col: usize| SensorConfig {
        device_id,
        row,
        col,
        report_period_s: 600,
        battery_pct: 100,
        label: format!("s{device_id}"),
        field_id: "field-a".into(),
        first_counter: 1,
        registered: true,
    };
    ScenarioConfig {
        schema_version: 1,
        seed,
        clock: ClockConfig {
            start_s: 0,
            end_s: 5400,
            tick_s: 1,
        },
        field: FieldConfig {
            rows: 10,
            cols: 10,
            cell_size_m: 10.0,
            origin_lat: 47.5,
            origin_lon: 16.4,
            elevation: ElevationSpec::Slope {
                base_m: 200.0,
                per_row_m: 1.0,
                per_col_m: 1.0,
            },
            climate: ClimateConfig {
                t_mean_c: 3.5,
                diurnal_amp_c: 0.0,
                t_peak_s: 50_400,
                noise_sigma_c: 0.05,
            },
            frost_events: vec![FrostEventConfig {
                start_s: 0,
                end_s: 5400,
                cooling_rate_c_per_h: 1.0,
                pooling_gain: 3.0,
            }],
        },
        link: LinkConfig {
            duplicate_fraction: 0.1,
        },
        gateway: GatewayConfig {
            gateway_id: "gw-1".into(),
            member_id: "gw-1".into(),
            row: 5,
            col: 5,
        },
        provider: ProviderConfig {
            member_id: "provider-1".into(),
            store_dir: None,
        },
        sensors: vec![
            sensor(101, 1, 1),
            sensor(102, 1, 8),
            sensor(103, 8, 1),
            sensor(104, 8, 8),
            sensor(105, 4, 4),
        ],
        members: vec![
            member("provider-1", MemberRole::Provider, "cert-p", true),
            member("gw-1", MemberRole::Gateway, "cert-g", true),
            member("frost-service", MemberRole::Consumer, "cert-c", false),
            member("intruder", MemberRole::Consumer, "cert-x", false),
        ],
        certificates: vec![
            cert("cert-p"),
            cert("cert-g"),
            cert("cert-c"),
            cert("cert-x"),
        ],
        approved_certs: vec!["cert-p".into(), "cert-g".into(), "cert-c".into()],
        offers: vec![OfferConfig {
            contract_id: "offer-demo".into(),
            provider: "provider-1".into(),
            dataset_id: "ds-field-a".into(),
            policy: PolicyConfig {
                policy_id: "pol-demo".into(),
                window: [0, 86_400],
                bbox: None,
                max_requests_per_hour: 4,
                expires_at: 4_000_000_000,
                purpose: "frost-monitoring".into(),
            },
        }],
        script: vec![
            ScriptStep {
                at: 30,
                actor: "frost-service".into(),
                action: ScriptAction::Enroll {
                    cert_id: "cert-c".into(),
                },
            },
            ScriptStep {
                at: 60,
                actor: "provider-1".into(),
                action: ScriptAction::PublishOffer {
                    contract_id: "offer-demo".into(),
                },
            },
            ScriptStep {
                at: 90,
                actor: "frost-service".into(),
                action: ScriptAction::RequestContract {
                    contract_id: "offer-demo".into(),
                },
            },
            ScriptStep {
                at: 120,
                actor: "provider-1".into(),
                action: ScriptAction::Decide {
                    contract_id: "offer-demo".into(),
                    decision: DecisionKind::Accept,
                },
            },
            ScriptStep {
                at: 150,
                actor: "frost-service".into(),
                action: ScriptAction::Countersign {
                    contract_id: "offer-demo".into(),
                },
            },
            // intruder probes before and after activation
            ScriptStep {
                at: 200,
                actor: "intruder".into(),
                action: ScriptAction::Enroll {
                    cert_id: "cert-x".into(),
                },
            },
            ScriptStep {
                at: 2000,
                actor: "intruder".into(),
                action: ScriptAction::DataRequest {
                    contract_id: "offer-demo".into(),
                    window: [0, 1900],
                    bbox: None,
                    analyze: false,
                    forge_key: false,
                },
            },
            ScriptStep {
                at: 2400,
                actor: "frost-service".into(),
                action: ScriptAction::DataRequest {
                    contract_id: "offer-demo".into(),
                    window: [0, 2300],
                    bbox: None,
                    analyze: true,
                    forge_key: true,
                },
            },
            ScriptStep {
                at: 2500,
                actor: "frost-service".into(),
                action: ScriptAction::DataRequest {
                    contract_id: "offer-demo".into(),
                    window: [0, 2400],
                    bbox: None,
                    analyze: true,
                    forge_key: false,
                },
            },
            ScriptStep {
                at: 5300,
                actor: "frost-service".into(),
                action: ScriptAction::DataRequest {
                    contract_id: "offer-demo".into(),
                    window: [0, 5200],
                    bbox: None,
                    analyze: true,
                    forge_key: false,
                },
            },
        ],
        frost: FrostSection {
            critical_temp_c: -0.5,
            idw_power: 2.0,
            snap_epsilon_m: 0.5,
            trend_window: 6,
        },
    }
}

//! Scenario configuration: a single TOML document describing the field, the
//! sensor fleet, the gateway, data-space membership, offers, the consumer
//! script, and the frost analytics parameters.
//!
//! Parsing is fail-fast: unknown keys are errors, and
//! [`ScenarioConfig::validate`] checks referential integrity (every scripted
//! actor, certificate, contract and cell must exist) before a run starts.
//! The format is versioned through the mandatory `schema_version` field;
//! this build reads version 1. See `docs/scenario-schema.md` for the full
//! field reference.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataspace::{BoundingBox, ConnectorCertificate, MemberRole, UsagePolicy};
use crate::frost::FrostConfig;
use crate::geo::{GridSpec, LatLon};
use crate::provider::{dataset_id_for_field, SensorRegistration};
use crate::sensorsim::{Climate, FieldModel, FrostEvent, SimSensor};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub clock: ClockConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub link: LinkConfig,
    pub gateway: GatewayConfig,
    pub provider: ProviderConfig,
    pub sensors: Vec<SensorConfig>,
    pub members: Vec<MemberConfig>,
    pub certificates: Vec<CertificateConfig>,
    pub approved_certs: Vec<String>,
    #[serde(default)]
    pub offers: Vec<OfferConfig>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    pub frost: FrostSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockConfig {
    pub start_s: u64,
    pub end_s: u64,
    #[serde(default = "default_tick")]
    pub tick_s: u64,
}

fn default_tick() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub elevation: ElevationSpec,
    pub climate: ClimateConfig,
    #[serde(default)]
    pub frost_events: Vec<FrostEventConfig>,
}

/// Per-cell elevation, one of three generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ElevationSpec {
    Uniform {
        value_m: f64,
    },
    /// Plane: `base_m + per_row_m·row + per_col_m·col`.
    Slope {
        base_m: f64,
        per_row_m: f64,
        per_col_m: f64,
    },
    /// Explicit matrix, `rows` outer entries of `cols` values each.
    Matrix {
        rows_m: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateConfig {
    pub t_mean_c: f64,
    pub diurnal_amp_c: f64,
    pub t_peak_s: u64,
    pub noise_sigma_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrostEventConfig {
    pub start_s: u64,
    pub end_s: u64,
    pub cooling_rate_c_per_h: f64,
    pub pooling_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Fraction of frames the radio link delivers twice (replay fault
    /// injection), in [0, 1].
    #[serde(default)]
    pub duplicate_fraction: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            duplicate_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub gateway_id: String,
    /// Member identity that signs the gateway's ingestion batches.
    pub member_id: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Member identity that owns the datasets and signs data responses.
    pub member_id: String,
    /// Directory for the persistent record store; in-memory when absent.
    #[serde(default)]
    pub store_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub device_id: u64,
    pub row: usize,
    pub col: usize,
    pub report_period_s: u64,
    #[serde(default = "default_battery")]
    pub battery_pct: u8,
    pub label: String,
    #[serde(default = "default_field_id")]
    pub field_id: String,
    #[serde(default = "default_first_counter")]
    pub first_counter: u32,
    /// Unregistered sensors still transmit; the provider quarantines them.
    #[serde(default = "default_true")]
    pub registered: bool,
}

fn default_battery() -> u8 {
    100
}
fn default_field_id() -> String {
    "field-a".to_string()
}
fn default_first_counter() -> u32 {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub member_id: String,
    pub display_name: String,
    pub role: MemberRole,
    pub cert_id: String,
    /// Enrolled by the harness at scenario start; scripted actors usually
    /// enrol themselves instead.
    #[serde(default)]
    pub auto_enroll: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub cert_id: String,
    pub connector_build_hash: String,
    pub issued_by: String,
    pub valid_until: u64,
}

impl CertificateConfig {
    pub fn to_certificate(&self) -> ConnectorCertificate {
        ConnectorCertificate {
            cert_id: self.cert_id.clone(),
            connector_build_hash: self.connector_build_hash.clone(),
            issued_by: self.issued_by.clone(),
            valid_until: self.valid_until,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfferConfig {
    pub contract_id: String,
    pub provider: String,
    pub dataset_id: String,
    pub policy: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy_id: String,
    /// `[a, b]` over record timestamps, inclusive.
    pub window: [u64; 2],
    /// `[lat_min, lat_max, lon_min, lon_max]`.
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
    pub max_requests_per_hour: u32,
    pub expires_at: u64,
    pub purpose: String,
}

impl PolicyConfig {
    pub fn to_policy(&self) -> UsagePolicy {
        UsagePolicy {
            policy_id: self.policy_id.clone(),
            time_window: (self.window[0], self.window[1]),
            spatial_scope: self
                .bbox
                .map(|[lat_min, lat_max, lon_min, lon_max]| BoundingBox {
                    lat_min,
                    lat_max,
                    lon_min,
                    lon_max,
                }),
            max_requests_per_hour: self.max_requests_per_hour,
            expires_at: self.expires_at,
            purpose: self.purpose.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub at: u64,
    pub actor: String,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Accept,
    Reject,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptAction {
    Enroll {
        cert_id: String,
    },
    PublishOffer {
        contract_id: String,
    },
    RequestContract {
        contract_id: String,
    },
    Decide {
        contract_id: String,
        decision: DecisionKind,
    },
    Countersign {
        contract_id: String,
    },
    DataRequest {
        contract_id: String,
        window: [u64; 2],
        #[serde(default)]
        bbox: Option<[f64; 4]>,
        /// Run the frost analytics on the delivered records.
        #[serde(default = "default_true")]
        analyze: bool,
        /// Adversarial: sign with a key that is not the actor's enrolment
        /// secret.
        #[serde(default)]
        forge_key: bool,
    },
    CatalogQuery,
    /// Authority action revoking a membership (actor is usually "system").
    RevokeMember {
        member_id: String,
    },
}

impl ScriptAction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Enroll { .. } => "enroll",
            Self::PublishOffer { .. } => "publish_offer",
            Self::RequestContract { .. } => "request_contract",
            Self::Decide { .. } => "decide",
            Self::Countersign { .. } => "countersign",
            Self::DataRequest { .. } => "data_request",
            Self::CatalogQuery => "catalog_query",
            Self::RevokeMember { .. } => "revoke_member",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrostSection {
    pub critical_temp_c: f64,
    #[serde(default = "default_idw_power")]
    pub idw_power: f64,
    #[serde(default = "default_snap_epsilon")]
    pub snap_epsilon_m: f64,
    #[serde(default = "default_trend_window")]
    pub trend_window: usize,
}

fn default_idw_power() -> f64 {
    2.0
}
fn default_snap_epsilon() -> f64 {
    0.5
}
fn default_trend_window() -> usize {
    6
}

impl FrostSection {
    pub fn to_config(&self) -> FrostConfig {
        FrostConfig {
            critical_temp_c: self.critical_temp_c,
            idw_power: self.idw_power,
            snap_epsilon_m: self.snap_epsilon_m,
            trend_window: self.trend_window,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(
            self.field.rows,
            self.field.cols,
            self.field.cell_size_m,
            LatLon::new(self.field.origin_lat, self.field.origin_lon),
        )
    }

    pub fn build_field_model(&self) -> FieldModel {
        let grid = self.grid();
        let elevation_m = match &self.field.elevation {
            ElevationSpec::Uniform { value_m } => vec![*value_m; grid.cell_count()],
            ElevationSpec::Slope {
                base_m,
                per_row_m,
                per_col_m,
            } => (0..grid.rows)
                .flat_map(|r| {
                    (0..grid.cols)
                        .map(move |c| base_m + per_row_m * r as f64 + per_col_m * c as f64)
                })
                .collect(),
            ElevationSpec::Matrix { rows_m } => rows_m.iter().flatten().copied().collect(),
        };
        FieldModel {
            grid,
            elevation_m,
            climate: Climate {
                t_mean_c: self.field.climate.t_mean_c,
                diurnal_amp_c: self.field.climate.diurnal_amp_c,
                t_peak_s: self.field.climate.t_peak_s,
                noise_sigma_c: self.field.climate.noise_sigma_c,
            },
            frost_events: self
                .field
                .frost_events
                .iter()
                .map(|e| FrostEvent {
                    start_s: e.start_s,
                    end_s: e.end_s,
                    cooling_rate_c_per_h: e.cooling_rate_c_per_h,
                    pooling_gain: e.pooling_gain,
                })
                .collect(),
        }
    }

    pub fn build_sim_sensors(&self) -> Vec<SimSensor> {
        self.sensors
            .iter()
            .map(|s| SimSensor {
                device_id: s.device_id,
                row: s.row,
                col: s.col,
                report_period_s: s.report_period_s,
                next_counter: s.first_counter,
                battery_pct: s.battery_pct,
            })
            .collect()
    }

    /// Registrations for the sensors marked `registered`, with coordinates
    /// and elevation taken from the sensor's cell.
    pub fn build_registrations(&self, field: &FieldModel) -> Vec<SensorRegistration> {
        self.sensors
            .iter()
            .filter(|s| s.registered)
            .map(|s| {
                let pos = field.grid.cell_center(s.row, s.col);
                SensorRegistration {
                    device_id: s.device_id,
                    lat: pos.lat,
                    lon: pos.lon,
                    elevation_m: field.elevation(s.row, s.col),
                    label: s.label.clone(),
                    field_id: s.field_id.clone(),
                }
            })
            .collect()
    }

    pub fn member(&self, member_id: &str) -> Option<&MemberConfig> {
        self.members.iter().find(|m| m.member_id == member_id)
    }

    pub fn certificate(&self, cert_id: &str) -> Option<&CertificateConfig> {
        self.certificates.iter().find(|c| c.cert_id == cert_id)
    }

    /// Structural and referential validation with field-level diagnostics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();

        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.clock.start_s >= self.clock.end_s {
            problems.push(format!(
                "clock: start_s {} must be < end_s {}",
                self.clock.start_s, self.clock.end_s
            ));
        }
        if self.clock.tick_s == 0 {
            problems.push("clock.tick_s: must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.link.duplicate_fraction) {
            problems.push(format!(
                "link.duplicate_fraction: {} outside [0, 1]",
                self.link.duplicate_fraction
            ));
        }

        // field geometry + elevation shape
        let field = self.build_field_model();
        if let Err(reason) = field.validate() {
            problems.push(format!("field: {reason}"));
        }
        if let ElevationSpec::Matrix { rows_m } = &self.field.elevation {
            if rows_m.len() != self.field.rows
                || rows_m.iter().any(|row| row.len() != self.field.cols)
            {
                problems.push("field.elevation.matrix: shape must be rows x cols".into());
            }
        }

        let grid = self.grid();
        if !grid.contains(self.gateway.row, self.gateway.col) {
            problems.push(format!(
                "gateway: cell ({}, {}) outside the {}x{} grid",
                self.gateway.row, self.gateway.col, self.field.rows, self.field.cols
            ));
        }

        let mut device_ids = BTreeSet::new();
        for sensor in &self.sensors {
            if !device_ids.insert(sensor.device_id) {
                problems.push(format!("sensors: duplicate device_id {}", sensor.device_id));
            }
            if !grid.contains(sensor.row, sensor.col) {
                problems.push(format!(
                    "sensors[device {}]: cell ({}, {}) outside the grid",
                    sensor.device_id, sensor.row, sensor.col
                ));
            }
            if sensor.report_period_s == 0 {
                problems.push(format!(
                    "sensors[device {}]: report_period_s must be > 0",
                    sensor.device_id
                ));
            }
            if sensor.battery_pct > 100 {
                problems.push(format!(
                    "sensors[device {}]: battery_pct {} > 100",
                    sensor.device_id, sensor.battery_pct
                ));
            }
        }

        let mut member_ids = BTreeSet::new();
        let cert_ids: BTreeSet<&str> = self
            .certificates
            .iter()
            .map(|c| c.cert_id.as_str())
            .collect();
        for member in &self.members {
            if !member_ids.insert(member.member_id.as_str()) {
                problems.push(format!("members: duplicate member_id {}", member.member_id));
            }
            if !cert_ids.contains(member.cert_id.as_str()) {
                problems.push(format!(
                    "members[{}]: unknown cert_id {}",
                    member.member_id, member.cert_id
                ));
            }
        }

        match self.member(&self.gateway.member_id) {
            None => problems.push(format!(
                "gateway.member_id: {} is not a configured member",
                self.gateway.member_id
            )),
            Some(m) if m.role != MemberRole::Gateway => problems.push(format!(
                "gateway.member_id: {} must have role \"gateway\"",
                self.gateway.member_id
            )),
            _ => {}
        }
        match self.member(&self.provider.member_id) {
            None => problems.push(format!(
                "provider.member_id: {} is not a configured member",
                self.provider.member_id
            )),
            Some(m) if m.role != MemberRole::Provider => problems.push(format!(
                "provider.member_id: {} must have role \"provider\"",
                self.provider.member_id
            )),
            _ => {}
        }

        let dataset_ids: BTreeSet<String> = self
            .sensors
            .iter()
            .filter(|s| s.registered)
            .map(|s| dataset_id_for_field(&s.field_id))
            .collect();
        let mut contract_ids = BTreeSet::new();
        for offer in &self.offers {
            if !contract_ids.insert(offer.contract_id.as_str()) {
                problems.push(format!(
                    "offers: duplicate contract_id {}",
                    offer.contract_id
                ));
            }
            if self.member(&offer.provider).is_none() {
                problems.push(format!(
                    "offers[{}]: unknown provider {}",
                    offer.contract_id, offer.provider
                ));
            }
            if !dataset_ids.contains(&offer.dataset_id) {
                problems.push(format!(
                    "offers[{}]: dataset {} matches no registered sensor field",
                    offer.contract_id, offer.dataset_id
                ));
            }
            if let Err(e) = offer.policy.to_policy().validate() {
                problems.push(format!("offers[{}]: {e}", offer.contract_id));
            }
        }

        for (i, step) in self.script.iter().enumerate() {
            if step.actor != "system" && self.member(&step.actor).is_none() {
                problems.push(format!("script[{i}]: unknown actor {}", step.actor));
            }
            if step.at < self.clock.start_s || step.at > self.clock.end_s {
                problems.push(format!(
                    "script[{i}]: at {} outside the clock horizon [{}, {}]",
                    step.at, self.clock.start_s, self.clock.end_s
                ));
            }
            match &step.action {
                ScriptAction::Enroll { cert_id } => {
                    if !cert_ids.contains(cert_id.as_str()) {
                        problems.push(format!("script[{i}]: unknown cert_id {cert_id}"));
                    }
                }
                ScriptAction::PublishOffer { contract_id }
                | ScriptAction::RequestContract { contract_id }
                | ScriptAction::Decide { contract_id, .. }
                | ScriptAction::Countersign { contract_id }
                | ScriptAction::DataRequest { contract_id, .. } => {
                    if !contract_ids.contains(contract_id.as_str()) {
                        problems.push(format!("script[{i}]: unknown contract_id {contract_id}"));
                    }
                }
                ScriptAction::CatalogQuery => {}
                ScriptAction::RevokeMember { member_id } => {
                    if self.member(member_id).is_none() {
                        problems.push(format!("script[{i}]: unknown member_id {member_id}"));
                    }
                }
            }
        }

        if let Err(reason) = self.frost.to_config().validate() {
            problems.push(format!("frost: {reason}"));
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

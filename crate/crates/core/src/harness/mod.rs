//! Scenario harness: instantiates every component against a simulated
//! clock, runs the discrete-time loop (frames → gateway → provider;
//! scripted consumer actions; frost analysis after each contracted data
//! pull), and emits a machine-readable run report plus the audit log.
//!
//! Time never comes from the wall clock. In-process runs are fully
//! deterministic: the same (config, seed) produces byte-identical reports.
//! The `--net` mode routes every gateway and consumer message over loopback
//! TCP instead of direct calls; the service side is identical.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use thiserror::Error;

use crate::dataspace::service::ConnectorService;
use crate::frost::{analyze_field, FieldAnalysis, FrostAlert, FrostConfig};
use crate::gateway::{AcceptOutcome, DropReason, Gateway};
use crate::geo::{GridSpec, LatLon};
use crate::net::{EnvelopeClient, NetServer};
use crate::provider::{Provider, ProviderError, SensorRecord};
use crate::rng::DetRng;
use crate::sensorsim::{emission_schedule, Emission, SimError};
use crate::wire::{decode_frame, encode_frame, sign_envelope, Envelope, MsgType};

pub use config::{ConfigError, ScenarioConfig, ScriptAction, ScriptStep};
pub use report::{
    audit_from_jsonl, audit_to_jsonl, sovereignty_diagnostics, verify_outputs, AuditSummary,
    FrameTotals, IngestTotals, RunReport, ScriptOutcome, TransferTotals, VerifyOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    InProcess,
    Net,
}

impl RunMode {
    fn as_str(self) -> &'static str {
        match self {
            Self::InProcess => "in-process",
            Self::Net => "net",
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("provider setup failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("simulation setup failed: {0}")]
    Sim(#[from] SimError),
    #[error("transport setup failed: {0}")]
    Io(#[from] io::Error),
}

pub struct RunOutput {
    pub report: RunReport,
    pub audit: Vec<crate::dataspace::AuditRecord>,
    /// Snapshot and zones of the last analyzed data pull, for CSV export
    /// and the terminal zone map.
    pub last_analysis: Option<FieldAnalysis>,
}

/// Both run modes behind one request surface. `channel` keeps one TCP
/// connection per client identity in net mode.
enum ServiceHandle {
    Local(Box<ConnectorService>),
    Net {
        service: Arc<Mutex<ConnectorService>>,
        server: Option<NetServer>,
        clock: Arc<AtomicU64>,
        clients: BTreeMap<String, EnvelopeClient>,
    },
}

impl ServiceHandle {
    fn request(&mut self, channel: &str, envelope: &Envelope, now: u64) -> Envelope {
        match self {
            Self::Local(service) => service.handle(envelope, now),
            Self::Net {
                server,
                clock,
                clients,
                ..
            } => {
                clock.store(now, Ordering::Relaxed);
                let addr = server.as_ref().expect("server running").addr();
                let result = clients
                    .entry(channel.to_string())
                    .or_insert_with(|| EnvelopeClient::connect(addr).expect("loopback connect"))
                    .request(envelope);
                match result {
                    Ok(response) => response,
                    Err(e) => {
                        // surface transport trouble as a response, never a crash
                        clients.remove(channel);
                        Envelope::unsigned(
                            "0".repeat(32),
                            "transport",
                            MsgType::Error,
                            json!({"code": "TransportError", "message": e.to_string()}),
                        )
                    }
                }
            }
        }
    }

    fn tick(&mut self, now: u64) {
        match self {
            Self::Local(service) => service.tick(now),
            Self::Net { service, .. } => lock(service).tick(now),
        }
    }

    fn revoke_member(&mut self, member_id: &str, now: u64) -> Result<(), String> {
        let revoke = |svc: &mut ConnectorService| {
            svc.space_mut()
                .revoke_member(member_id, now)
                .map_err(|e| e.code().to_string())
        };
        match self {
            Self::Local(service) => revoke(service),
            Self::Net { service, .. } => revoke(&mut lock(service)),
        }
    }

    /// Tears down the transport and returns the final service state.
    fn finish(self) -> ConnectorService {
        match self {
            Self::Local(service) => *service,
            Self::Net {
                service,
                server,
                clients,
                ..
            } => {
                drop(clients); // close connections so their threads exit
                if let Some(server) = server {
                    server.shutdown();
                }
                match Arc::try_unwrap(service) {
                    Ok(mutex) => mutex.into_inner().unwrap_or_else(|p| p.into_inner()),
                    Err(_) => unreachable!("all service clones joined at shutdown"),
                }
            }
        }
    }
}

fn lock(service: &Arc<Mutex<ConnectorService>>) -> std::sync::MutexGuard<'_, ConnectorService> {
    match service.lock() {
        Ok(guard) => guard,
        Err(poisoned) => poisoned.into_inner(),
    }
}

/// Client-side actor state: issued secrets and deterministic message ids.
struct ScriptDriver {
    seed: u64,
    keys: BTreeMap<String, Vec<u8>>,
    msg_rng: DetRng,
}

struct ExecOutcome {
    outcome: String,
    alert: Option<FrostAlert>,
    analysis: Option<FieldAnalysis>,
    records_delivered: Option<u64>,
}

impl ExecOutcome {
    fn plain(outcome: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            alert: None,
            analysis: None,
            records_delivered: None,
        }
    }
}

impl ScriptDriver {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            keys: BTreeMap::new(),
            msg_rng: DetRng::new(seed).derive("client-msg-ids"),
        }
    }

    /// Key an actor signs with before (or instead of) enrolment: stable,
    /// wrong, and unknown to the service.
    fn fake_key(&self, actor: &str) -> Vec<u8> {
        DetRng::new(self.seed)
            .derive(&format!("fake-key:{actor}"))
            .bytes(32)
    }

    fn key_for(&self, actor: &str) -> Vec<u8> {
        self.keys
            .get(actor)
            .cloned()
            .unwrap_or_else(|| self.fake_key(actor))
    }

    fn signed(&mut self, actor: &str, msg_type: MsgType, body: Value, key: &[u8]) -> Envelope {
        sign_envelope(
            Envelope::unsigned(self.msg_rng.hex_id(), actor, msg_type, body),
            key,
        )
    }

    fn enroll(
        &mut self,
        handle: &mut ServiceHandle,
        cfg: &ScenarioConfig,
        actor: &str,
        cert_id: &str,
        now: u64,
    ) -> String {
        let Some(member) = cfg.member(actor) else {
            return "error:UnknownActor".into();
        };
        let Some(cert) = cfg.certificate(cert_id) else {
            return "error:UnknownCert".into();
        };
        let body = json!({
            "member_id": actor,
            "display_name": member.display_name,
            "role": member.role,
            "cert": cert.to_certificate(),
        });
        let key = self.fake_key(actor);
        let envelope = self.signed(actor, MsgType::Enroll, body, &key);
        let response = handle.request(actor, &envelope, now);
        match response.msg_type {
            MsgType::EnrollAck => {
                if let Some(secret_hex) = response.body["shared_secret"].as_str() {
                    if let Ok(secret) = hex::decode(secret_hex) {
                        self.keys.insert(actor.to_string(), secret);
                        return "enrolled".into();
                    }
                }
                "error:BadAck".into()
            }
            _ => format!("error:{}", error_code(&response)),
        }
    }

    fn execute(
        &mut self,
        handle: &mut ServiceHandle,
        cfg: &ScenarioConfig,
        step: &ScriptStep,
        grid: &GridSpec,
        frost_cfg: &FrostConfig,
        now: u64,
    ) -> ExecOutcome {
        let actor = step.actor.as_str();
        match &step.action {
            ScriptAction::Enroll { cert_id } => {
                ExecOutcome::plain(self.enroll(handle, cfg, actor, cert_id, now))
            }
            ScriptAction::PublishOffer { contract_id } => {
                let Some(offer) = cfg.offers.iter().find(|o| o.contract_id == *contract_id) else {
                    return ExecOutcome::plain("error:UnknownOffer");
                };
                let body = json!({
                    "contract_id": offer.contract_id,
                    "dataset_id": offer.dataset_id,
                    "policy": offer.policy.to_policy(),
                });
                let key = self.key_for(actor);
                let envelope = self.signed(actor, MsgType::OfferPublish, body, &key);
                let response = handle.request(actor, &envelope, now);
                match response.msg_type {
                    MsgType::CatalogResult => ExecOutcome::plain("published"),
                    _ => ExecOutcome::plain(format!("error:{}", error_code(&response))),
                }
            }
            ScriptAction::RequestContract { contract_id } => self.negotiation_step(
                handle,
                actor,
                MsgType::ContractRequest,
                json!({"contract_id": contract_id}),
                now,
            ),
            ScriptAction::Decide {
                contract_id,
                decision,
            } => {
                let decision = match decision {
                    config::DecisionKind::Accept => "accept",
                    config::DecisionKind::Reject => "reject",
                    config::DecisionKind::Revoke => "revoke",
                };
                self.negotiation_step(
                    handle,
                    actor,
                    MsgType::ContractDecision,
                    json!({"contract_id": contract_id, "decision": decision}),
                    now,
                )
            }
            ScriptAction::Countersign { contract_id } => self.negotiation_step(
                handle,
                actor,
                MsgType::ContractCountersign,
                json!({"contract_id": contract_id}),
                now,
            ),
            ScriptAction::CatalogQuery => {
                let key = self.key_for(actor);
                let envelope = self.signed(actor, MsgType::CatalogQuery, json!({}), &key);
                let response = handle.request(actor, &envelope, now);
                match response.msg_type {
                    MsgType::CatalogResult => {
                        let n = response.body["offers"].as_array().map_or(0, Vec::len);
                        ExecOutcome::plain(format!("offers:{n}"))
                    }
                    _ => ExecOutcome::plain(format!("error:{}", error_code(&response))),
                }
            }
            ScriptAction::DataRequest {
                contract_id,
                window,
                bbox,
                analyze,
                forge_key,
            } => {
                let mut body = json!({
                    "contract_id": contract_id,
                    "window": [window[0], window[1]],
                });
                if let Some([lat_min, lat_max, lon_min, lon_max]) = bbox {
                    body["bbox"] = json!({
                        "lat_min": lat_min,
                        "lat_max": lat_max,
                        "lon_min": lon_min,
                        "lon_max": lon_max,
                    });
                }
                let key = if *forge_key {
                    self.fake_key(actor)
                } else {
                    self.key_for(actor)
                };
                let envelope = self.signed(actor, MsgType::DataRequest, body, &key);
                let response = handle.request(actor, &envelope, now);
                if response.msg_type != MsgType::DataResponse {
                    return ExecOutcome::plain(format!("error:{}", error_code(&response)));
                }
                let records: Vec<SensorRecord> =
                    serde_json::from_value(response.body["records"].clone()).unwrap_or_default();
                let mut exec = ExecOutcome {
                    outcome: format!("records:{}", records.len()),
                    alert: None,
                    analysis: None,
                    records_delivered: Some(records.len() as u64),
                };
                if *analyze && !records.is_empty() {
                    if let Ok(analysis) = analyze_field(grid, &records, frost_cfg, now) {
                        if let Some(alert) = &analysis.alert {
                            exec.outcome.push_str(" alert");
                            exec.alert = Some(alert.clone());
                        }
                        exec.analysis = Some(analysis);
                    }
                }
                exec
            }
            ScriptAction::RevokeMember { member_id } => {
                match handle.revoke_member(member_id, now) {
                    Ok(()) => ExecOutcome::plain("revoked"),
                    Err(code) => ExecOutcome::plain(format!("error:{code}")),
                }
            }
        }
    }

    fn negotiation_step(
        &mut self,
        handle: &mut ServiceHandle,
        actor: &str,
        msg_type: MsgType,
        body: Value,
        now: u64,
    ) -> ExecOutcome {
        let key = self.key_for(actor);
        let envelope = self.signed(actor, msg_type, body, &key);
        let response = handle.request(actor, &envelope, now);
        match response.msg_type {
            MsgType::ContractDecision => ExecOutcome::plain(format!(
                "state:{}",
                response.body["state"].as_str().unwrap_or("?")
            )),
            _ => ExecOutcome::plain(format!("error:{}", error_code(&response))),
        }
    }
}

fn error_code(response: &Envelope) -> String {
    response.body["code"]
        .as_str()
        .unwrap_or("UnexpectedResponse")
        .to_string()
}

/// Runs one scenario end to end and returns the finalized report plus the
/// audit log. Protocol-level failures (bad signatures, invalid transitions,
/// policy denials, replayed frames) surface in the report; only setup
/// problems error out.
pub fn run_scenario(cfg: &ScenarioConfig, mode: RunMode) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let field = cfg.build_field_model();
    let grid = field.grid.clone();
    let sim_sensors = cfg.build_sim_sensors();
    let frost_cfg = cfg.frost.to_config();
    let (start, end, tick) = (cfg.clock.start_s, cfg.clock.end_s, cfg.clock.tick_s);

    let mut provider = match &cfg.provider.store_dir {
        Some(dir) => Provider::open(std::path::Path::new(dir))?,
        None => Provider::in_memory(),
    };
    for registration in cfg.build_registrations(&field) {
        provider.register_sensor(registration)?;
    }
    let service = ConnectorService::new(cfg.approved_certs.clone(), provider, cfg.seed);

    let mut handle = match mode {
        RunMode::InProcess => ServiceHandle::Local(Box::new(service)),
        RunMode::Net => {
            let service = Arc::new(Mutex::new(service));
            let clock = Arc::new(AtomicU64::new(start));
            let server = NetServer::spawn(service.clone(), clock.clone())?;
            ServiceHandle::Net {
                service,
                server: Some(server),
                clock,
                clients: BTreeMap::new(),
            }
        }
    };

    let positions: BTreeMap<u64, LatLon> = sim_sensors
        .iter()
        .map(|s| (s.device_id, grid.cell_center(s.row, s.col)))
        .collect();
    let mut gateway = Gateway::new(
        &cfg.gateway.gateway_id,
        grid.cell_center(cfg.gateway.row, cfg.gateway.col),
        grid.clone(),
        positions,
    );

    // expand the reporting schedule, injecting link-level duplicates
    let emissions = emission_schedule(&field, &sim_sensors, cfg.seed, start, end)?;
    let mut link_rng = DetRng::new(cfg.seed).derive("link-duplicates");
    let mut deliveries: Vec<Emission> = Vec::with_capacity(emissions.len());
    let mut duplicates_injected = 0u64;
    for emission in &emissions {
        deliveries.push(*emission);
        if link_rng.chance(cfg.link.duplicate_fraction) {
            deliveries.push(*emission);
            duplicates_injected += 1;
        }
    }

    let mut report = RunReport {
        schema_version: config::SCHEMA_VERSION,
        mode: mode.as_str().to_string(),
        seed: cfg.seed,
        clock: cfg.clock,
        frames: FrameTotals {
            emitted: emissions.len() as u64,
            duplicates_injected,
            ..FrameTotals::default()
        },
        ingest: IngestTotals::default(),
        script_events: Vec::new(),
        policy_outcomes: BTreeMap::new(),
        transfers: TransferTotals::default(),
        alerts: Vec::new(),
        audit: AuditSummary {
            records: 0,
            head_hash: String::new(),
            chain_ok: false,
        },
        digest: String::new(),
    };

    let mut driver = ScriptDriver::new(cfg.seed);
    for member in cfg.members.iter().filter(|m| m.auto_enroll) {
        let outcome = driver.enroll(&mut handle, cfg, &member.member_id, &member.cert_id, start);
        report.script_events.push(ScriptOutcome {
            at: start,
            actor: member.member_id.clone(),
            action: "auto_enroll".into(),
            outcome,
        });
    }

    let mut script: Vec<&ScriptStep> = cfg.script.iter().collect();
    script.sort_by_key(|s| s.at); // stable: config order breaks ties

    let gateway_member = cfg.gateway.member_id.clone();
    let mut last_analysis: Option<FieldAnalysis> = None;
    let mut delivery_idx = 0;
    let mut script_idx = 0;
    let mut t = start;
    loop {
        while delivery_idx < deliveries.len() && deliveries[delivery_idx].t <= t {
            let emission = &deliveries[delivery_idx];
            delivery_idx += 1;
            // frames cross the (emulated) radio as encoded bytes
            let bytes = encode_frame(&emission.frame).expect("simulator emits valid frames");
            let frame = decode_frame(&bytes).expect("clean link");
            match gateway.offer_frame(frame, t) {
                AcceptOutcome::Accepted => report.frames.accepted += 1,
                AcceptOutcome::Dropped(DropReason::Replay) => report.frames.dropped_replay += 1,
                AcceptOutcome::Dropped(DropReason::Stale) => report.frames.dropped_stale += 1,
            }
        }

        if gateway.should_flush(t) {
            forward_batch(
                &mut gateway,
                &mut driver,
                &mut handle,
                &gateway_member,
                t,
                &mut report,
            );
        }

        handle.tick(t);

        while script_idx < script.len() && script[script_idx].at <= t {
            let step = script[script_idx];
            script_idx += 1;
            let exec = driver.execute(&mut handle, cfg, step, &grid, &frost_cfg, t);
            report.script_events.push(ScriptOutcome {
                at: t,
                actor: step.actor.clone(),
                action: step.action.name().to_string(),
                outcome: exec.outcome,
            });
            if let Some(count) = exec.records_delivered {
                report.transfers.count += 1;
                report.transfers.records_delivered += count;
            }
            if let Some(alert) = exec.alert {
                report.alerts.push(alert);
            }
            if exec.analysis.is_some() {
                last_analysis = exec.analysis;
            }
        }

        if t >= end {
            break;
        }
        t = (t + tick).min(end);
    }

    if gateway.has_pending() {
        forward_batch(
            &mut gateway,
            &mut driver,
            &mut handle,
            &gateway_member,
            end,
            &mut report,
        );
    }

    let service = handle.finish();
    report.policy_outcomes = service.space().policy_tallies().clone();
    let audit = service.space().audit().records().to_vec();
    report.audit = AuditSummary {
        records: audit.len() as u64,
        head_hash: service.space().audit().head_hash(),
        chain_ok: crate::dataspace::verify_audit_chain(&audit).is_ok(),
    };

    Ok(RunOutput {
        report: report.finalize(),
        audit,
        last_analysis,
    })
}

fn forward_batch(
    gateway: &mut Gateway,
    driver: &mut ScriptDriver,
    handle: &mut ServiceHandle,
    gateway_member: &str,
    now: u64,
    report: &mut RunReport,
) {
    let batch = gateway
        .flush(now)
        .expect("flush only fires with pending frames");
    let body = serde_json::to_value(&batch).expect("batch serializes");
    let key = driver.key_for(gateway_member);
    let envelope = driver.signed(gateway_member, MsgType::IngestBatch, body, &key);
    let response = handle.request(gateway_member, &envelope, now);
    report.ingest.batches_sent += 1;
    if response.msg_type == MsgType::IngestBatch {
        report.ingest.stored += response.body["stored"].as_u64().unwrap_or(0);
        report.ingest.quarantined += response.body["quarantined"].as_u64().unwrap_or(0);
        report.ingest.duplicates += response.body["duplicates"].as_u64().unwrap_or(0);
    } else {
        report.ingest.batches_rejected += 1;
    }
}

/// Writes the two run outputs: the canonical report JSON and the audit log
/// as one canonical record per line.
pub fn write_outputs(
    output: &RunOutput,
    report_path: &std::path::Path,
    audit_path: &std::path::Path,
) -> io::Result<()> {
    let mut report_text = output.report.to_canonical_json();
    report_text.push('\n');
    std::fs::write(report_path, report_text)?;
    std::fs::write(audit_path, audit_to_jsonl(&output.audit))?;
    Ok(())
}

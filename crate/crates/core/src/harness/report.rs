//! Run reports and independent output verification.
//!
//! The report is the sole output contract of a run. Its `digest` field is
//! SHA-256 over the canonical JSON of the report body with the digest field
//! excluded, so byte-identical reruns are checkable from the file alone.
//!
//! [`verify_outputs`] re-derives everything it checks from the report and
//! the persisted audit log, never from live service state: the digest, the
//! hash chain, and the sovereignty conditions (transfers only under
//! contracts ACTIVE at transfer time, delivered records inside the policy
//! window and scope, transfer rates under the cap, no deliveries to
//! non-enrolled or revoked members).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataspace::{verify_audit_chain, AuditEvent, AuditRecord, PolicyTally};
use crate::frost::FrostAlert;
use crate::wire::canonical_json;

use super::config::ClockConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTotals {
    pub emitted: u64,
    pub duplicates_injected: u64,
    pub accepted: u64,
    pub dropped_replay: u64,
    pub dropped_stale: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestTotals {
    pub batches_sent: u64,
    pub batches_rejected: u64,
    pub stored: u64,
    pub quarantined: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTotals {
    pub count: u64,
    pub records_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptOutcome {
    pub at: u64,
    pub actor: String,
    pub action: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub records: u64,
    pub head_hash: String,
    pub chain_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub seed: u64,
    pub clock: ClockConfig,
    pub frames: FrameTotals,
    pub ingest: IngestTotals,
    pub script_events: Vec<ScriptOutcome>,
    pub policy_outcomes: BTreeMap<String, PolicyTally>,
    pub transfers: TransferTotals,
    pub alerts: Vec<FrostAlert>,
    pub audit: AuditSummary,
    /// SHA-256 over the canonical report body, digest excluded.
    pub digest: String,
}

impl RunReport {
    /// Recomputes the digest from the current field values.
    pub fn compute_digest(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        digest_of_value(&value)
    }

    pub fn finalize(mut self) -> Self {
        self.digest = self.compute_digest();
        self
    }

    /// Canonical single-document form written to the report file.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        canonical_json(&value)
    }
}

/// Digest over a report JSON value with the digest field stripped.
fn digest_of_value(report: &Value) -> String {
    let mut body = report.clone();
    if let Value::Object(map) = &mut body {
        map.remove("digest");
    }
    let canonical = canonical_json(&body);
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Audit log file form: one canonical record per line.
pub fn audit_to_jsonl(records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&record.canonical_line());
        out.push('\n');
    }
    out
}

pub fn audit_from_jsonl(text: &str) -> Result<Vec<AuditRecord>, serde_json::Error> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

/// Everything the audit log tells us about one contract's governing policy.
#[derive(Debug, Clone, Deserialize)]
struct AuditedPolicy {
    time_window: (u64, u64),
    spatial_scope: Option<AuditedBBox>,
    max_requests_per_hour: u32,
    expires_at: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct AuditedBBox {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

/// Contract lifecycle reconstructed purely from audit events.
#[derive(Debug, Default)]
struct ContractTimeline {
    policy: Option<AuditedPolicy>,
    /// (seq, at, state name) in audit order.
    transitions: Vec<(u64, u64, &'static str)>,
    transfer_times: Vec<u64>,
}

impl ContractTimeline {
    fn state_at(&self, seq: u64) -> &'static str {
        let mut state = "ABSENT";
        for &(transition_seq, _, next) in &self.transitions {
            if transition_seq < seq {
                state = next;
            }
        }
        state
    }
}

/// Independent verification of a run's outputs. All checks derive from the
/// two files alone.
pub fn verify_outputs(report_json: &str, audit_jsonl: &str) -> VerifyOutcome {
    let mut diagnostics = Vec::new();

    let report_value: Option<Value> = match serde_json::from_str(report_json) {
        Ok(v) => Some(v),
        Err(e) => {
            diagnostics.push(format!("report: not valid JSON: {e}"));
            None
        }
    };
    let report: Option<RunReport> =
        report_value
            .as_ref()
            .and_then(|v| match serde_json::from_value(v.clone()) {
                Ok(r) => Some(r),
                Err(e) => {
                    diagnostics.push(format!("report: does not match the report schema: {e}"));
                    None
                }
            });

    if let (Some(value), Some(report)) = (&report_value, &report) {
        let recomputed = digest_of_value(value);
        if recomputed != report.digest {
            diagnostics.push(format!(
                "report: digest mismatch (stored {}, recomputed {recomputed})",
                report.digest
            ));
        }
    }

    let audit: Vec<AuditRecord> = match audit_from_jsonl(audit_jsonl) {
        Ok(records) => records,
        Err(e) => {
            diagnostics.push(format!("audit: unparsable record: {e}"));
            return VerifyOutcome {
                ok: false,
                diagnostics,
            };
        }
    };

    if let Err(seq) = verify_audit_chain(&audit) {
        diagnostics.push(format!("audit: hash chain breaks at seq {seq}"));
    }

    if let Some(report) = &report {
        if report.audit.records != audit.len() as u64 {
            diagnostics.push(format!(
                "audit: report pins {} records, file has {}",
                report.audit.records,
                audit.len()
            ));
        }
        let head = audit
            .last()
            .map(|r| r.chain_hash.clone())
            .unwrap_or_else(|| "0".repeat(64));
        if report.audit.head_hash != head {
            diagnostics.push("audit: head hash does not match the report".into());
        }
    }

    diagnostics.extend(sovereignty_diagnostics(&audit));

    if let Some(report) = &report {
        let delivered: u64 = audit
            .iter()
            .filter(|r| r.event == AuditEvent::DataTransfer)
            .filter_map(|r| r.details.get("record_count").and_then(Value::as_u64))
            .sum();
        if delivered != report.transfers.records_delivered {
            diagnostics.push(format!(
                "transfers: report claims {} records delivered, audit shows {delivered}",
                report.transfers.records_delivered
            ));
        }
    }

    VerifyOutcome {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

/// Replays the audit log and checks the sovereignty conditions on every
/// DATA_TRANSFER record.
pub fn sovereignty_diagnostics(audit: &[AuditRecord]) -> Vec<String> {
    let mut diagnostics = Vec::new();
    let mut contracts: BTreeMap<String, ContractTimeline> = BTreeMap::new();
    // member_id -> (enrolled_at_seq, revoked_at_seq)
    let mut members: BTreeMap<String, (u64, Option<u64>)> = BTreeMap::new();

    let detail_str = |r: &AuditRecord, key: &str| -> Option<String> {
        r.details
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
    };

    for record in audit {
        match record.event {
            AuditEvent::Enroll => {
                if let Some(member_id) = detail_str(record, "member_id") {
                    members.entry(member_id).or_insert((record.seq, None));
                }
            }
            AuditEvent::Offer => {
                let Some(contract_id) = detail_str(record, "contract_id") else {
                    continue;
                };
                let timeline = contracts.entry(contract_id).or_default();
                timeline.policy = record
                    .details
                    .get("policy")
                    .and_then(|p| serde_json::from_value(p.clone()).ok());
                timeline
                    .transitions
                    .push((record.seq, record.at, "OFFERED"));
            }
            AuditEvent::Request => {
                if let Some(contract_id) = detail_str(record, "contract_id") {
                    contracts.entry(contract_id).or_default().transitions.push((
                        record.seq,
                        record.at,
                        "REQUESTED",
                    ));
                }
            }
            AuditEvent::Decision => {
                let Some(contract_id) = detail_str(record, "contract_id") else {
                    continue;
                };
                let state = match detail_str(record, "decision").as_deref() {
                    Some("accept") => "AGREED",
                    Some("reject") => "REJECTED",
                    Some("expire") => "EXPIRED",
                    other => {
                        diagnostics.push(format!(
                            "audit seq {}: unknown decision {other:?}",
                            record.seq
                        ));
                        continue;
                    }
                };
                contracts
                    .entry(contract_id)
                    .or_default()
                    .transitions
                    .push((record.seq, record.at, state));
            }
            AuditEvent::Countersign => {
                if let Some(contract_id) = detail_str(record, "contract_id") {
                    contracts
                        .entry(contract_id)
                        .or_default()
                        .transitions
                        .push((record.seq, record.at, "ACTIVE"));
                }
            }
            AuditEvent::Revoke => match detail_str(record, "kind").as_deref() {
                Some("member") => {
                    if let Some(member_id) = detail_str(record, "member_id") {
                        if let Some(entry) = members.get_mut(&member_id) {
                            entry.1.get_or_insert(record.seq);
                        }
                    }
                }
                Some("contract") => {
                    if let Some(contract_id) = detail_str(record, "contract_id") {
                        contracts
                            .entry(contract_id)
                            .or_default()
                            .transitions
                            .push((record.seq, record.at, "REVOKED"));
                    }
                }
                other => diagnostics.push(format!(
                    "audit seq {}: unknown revocation kind {other:?}",
                    record.seq
                )),
            },
            AuditEvent::DataTransfer => {
                let seq = record.seq;
                let Some(contract_id) = detail_str(record, "contract_id") else {
                    diagnostics.push(format!("audit seq {seq}: transfer without contract_id"));
                    continue;
                };
                let Some(timeline) = contracts.get_mut(&contract_id) else {
                    diagnostics.push(format!(
                        "audit seq {seq}: transfer under unknown contract {contract_id}"
                    ));
                    continue;
                };

                // (a) contract ACTIVE at transfer time
                let state = timeline.state_at(seq);
                if state != "ACTIVE" {
                    diagnostics.push(format!(
                        "audit seq {seq}: transfer under contract {contract_id} in state {state}"
                    ));
                }

                // (b) consuming member enrolled and not revoked
                let consumer = detail_str(record, "consumer_id").unwrap_or_default();
                match members.get(&consumer) {
                    None => diagnostics.push(format!(
                        "audit seq {seq}: transfer to non-enrolled member {consumer}"
                    )),
                    Some((_, Some(revoked_seq))) if *revoked_seq < seq => diagnostics.push(
                        format!("audit seq {seq}: transfer to revoked member {consumer}"),
                    ),
                    _ => {}
                }

                // (c) delivered records inside the policy window and scope
                let record_count = record
                    .details
                    .get("record_count")
                    .and_then(Value::as_u64)
                    .unwrap_or(0);
                if let Some(policy) = &timeline.policy {
                    if record.at >= policy.expires_at {
                        diagnostics.push(format!("audit seq {seq}: transfer after policy expiry"));
                    }
                    if record_count > 0 {
                        if let Some((ts_min, ts_max)) = record
                            .details
                            .get("ts_range")
                            .and_then(|v| {
                                serde_json::from_value::<Option<(u64, u64)>>(v.clone()).ok()
                            })
                            .flatten()
                        {
                            if ts_min < policy.time_window.0 || ts_max > policy.time_window.1 {
                                diagnostics.push(format!(
                                    "audit seq {seq}: delivered timestamps [{ts_min}, {ts_max}] escape the policy window {:?}",
                                    policy.time_window
                                ));
                            }
                        }
                        if let Some(scope) = &policy.spatial_scope {
                            let lat = record
                                .details
                                .get("lat_range")
                                .and_then(|v| {
                                    serde_json::from_value::<Option<(f64, f64)>>(v.clone()).ok()
                                })
                                .flatten();
                            let lon = record
                                .details
                                .get("lon_range")
                                .and_then(|v| {
                                    serde_json::from_value::<Option<(f64, f64)>>(v.clone()).ok()
                                })
                                .flatten();
                            if let (Some((lat_min, lat_max)), Some((lon_min, lon_max))) = (lat, lon)
                            {
                                if lat_min < scope.lat_min
                                    || lat_max > scope.lat_max
                                    || lon_min < scope.lon_min
                                    || lon_max > scope.lon_max
                                {
                                    diagnostics.push(format!(
                                        "audit seq {seq}: delivered coordinates escape the policy scope"
                                    ));
                                }
                            }
                        }
                    }

                    // (d) rate cap over every trailing hour
                    let in_window = timeline
                        .transfer_times
                        .iter()
                        .filter(|&&ts| ts <= record.at && ts + 3600 > record.at)
                        .count();
                    if in_window >= policy.max_requests_per_hour as usize {
                        diagnostics.push(format!(
                            "audit seq {seq}: transfer exceeds {} per trailing hour",
                            policy.max_requests_per_hour
                        ));
                    }
                } else {
                    diagnostics.push(format!(
                        "audit seq {seq}: transfer under contract {contract_id} with no audited policy"
                    ));
                }
                timeline.transfer_times.push(record.at);
            }
            AuditEvent::PolicyDeny => {}
        }
    }

    diagnostics
}

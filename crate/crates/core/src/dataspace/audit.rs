//! Hash-chained, tamper-evident audit log.
//!
//! Every sovereignty-relevant event appends one record. A record's
//! `chain_hash` is `SHA-256(prev_chain_hash_bytes ‖ canonical_record_bytes)`
//! where the canonical bytes serialize `{seq, at, actor, event, details}`
//! with sorted keys and no whitespace (the same canonical form envelope
//! signing uses), and the previous hash of the first record is 32 zero
//! bytes. Sequence numbers are gapless from 0, so deleting an interior
//! record is as detectable as mutating one.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::wire::canonical_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditEvent {
    Enroll,
    Offer,
    Request,
    Decision,
    Countersign,
    DataTransfer,
    PolicyDeny,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub at: u64,
    pub actor: String,
    pub event: AuditEvent,
    pub details: Value,
    /// Lowercase hex SHA-256 chaining this record to its predecessor.
    pub chain_hash: String,
}

impl AuditRecord {
    /// The bytes covered by the chain hash (everything but the hash itself).
    fn canonical_body(&self) -> Vec<u8> {
        canonical_json(&json!({
            "seq": self.seq,
            "at": self.at,
            "actor": self.actor,
            "event": self.event,
            "details": self.details,
        }))
        .into_bytes()
    }

    /// One line of the persisted log: the full record in canonical form.
    pub fn canonical_line(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("audit record serializes"))
    }
}

fn chain_hash(prev: &[u8; 32], body: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(prev);
    hasher.update(body);
    hasher.finalize().into()
}

#[derive(Debug, Default, Clone)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    head: [u8; 32],
}

impl AuditLog {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            head: [0u8; 32],
        }
    }

    pub fn append(
        &mut self,
        at: u64,
        actor: &str,
        event: AuditEvent,
        details: Value,
    ) -> &AuditRecord {
        let mut record = AuditRecord {
            seq: self.records.len() as u64,
            at,
            actor: actor.to_string(),
            event,
            details,
            chain_hash: String::new(),
        };
        self.head = chain_hash(&self.head, &record.canonical_body());
        record.chain_hash = hex::encode(self.head);
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Hex hash of the newest record; all zeros while empty.
    pub fn head_hash(&self) -> String {
        hex::encode(self.head)
    }
}

/// Recomputes the chain over a slice of records (e.g. parsed back from a
/// log file). Returns the first corrupt sequence number, which is also
/// where a deleted interior record betrays itself via the seq gap.
pub fn verify_audit_chain(records: &[AuditRecord]) -> Result<(), u64> {
    let mut prev = [0u8; 32];
    for (i, record) in records.iter().enumerate() {
        let expected_seq = i as u64;
        if record.seq != expected_seq {
            return Err(expected_seq);
        }
        prev = chain_hash(&prev, &record.canonical_body());
        if record.chain_hash != hex::encode(prev) {
            return Err(expected_seq);
        }
    }
    Ok(())
}

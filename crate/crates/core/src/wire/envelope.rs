//! Signed message envelope.
//!
//! Every service interaction travels as one `Envelope`. The signature is
//! HMAC-SHA256 over the canonical encoding: UTF-8 JSON with object keys
//! sorted lexicographically at every level, no insignificant whitespace,
//! and the `signature` field excluded. Keys are per-member shared secrets
//! issued at enrolment.

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

/// Message types carried on the data-space links. `INGEST_BATCH` is reserved
/// for the gateway→provider ingestion link and its acknowledgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgType {
    Enroll,
    EnrollAck,
    OfferPublish,
    CatalogQuery,
    CatalogResult,
    ContractRequest,
    ContractDecision,
    ContractCountersign,
    DataRequest,
    DataResponse,
    Error,
    IngestBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// 128-bit identifier, lowercase hex.
    pub msg_id: String,
    pub sender_id: String,
    pub msg_type: MsgType,
    pub body: Value,
    /// HMAC-SHA256 over the canonical encoding, lowercase hex. Empty until
    /// signed.
    pub signature: String,
}

impl Envelope {
    /// An envelope with an empty signature, ready for [`sign_envelope`].
    pub fn unsigned(msg_id: String, sender_id: &str, msg_type: MsgType, body: Value) -> Self {
        Self {
            msg_id,
            sender_id: sender_id.to_string(),
            msg_type,
            body,
            signature: String::new(),
        }
    }

    /// Canonical bytes the signature covers: sorted keys, no whitespace,
    /// `signature` field excluded.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("envelope serializes");
        if let Value::Object(map) = &mut value {
            map.remove("signature");
        }
        canonical_json(&value).into_bytes()
    }

    /// Canonical wire form including the signature (used by the stream
    /// transport, and for persisting audit records).
    pub fn canonical_wire_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("envelope serializes");
        canonical_json(&value).into_bytes()
    }
}

/// Serializes a JSON value with object keys sorted lexicographically at
/// every nesting level and no insignificant whitespace. Deterministic:
/// equal values always produce identical bytes.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's map is already sorted under default features; the
            // explicit sort keeps the encoding stable even if a downstream
            // build enables `preserve_order`.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[*key], out);
            }
            out.push('}');
        }
    }
}

/// HMAC-SHA256 of `msg` under `key`, lowercase hex.
pub fn hmac_sha256_hex(key: &[u8], msg: &[u8]) -> String {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(msg);
    hex::encode(mac.finalize().into_bytes())
}

/// Signs the envelope in place. The key must be non-empty (enforced at
/// enrolment, where secrets are at least 16 bytes).
pub fn sign_envelope(mut envelope: Envelope, key: &[u8]) -> Envelope {
    assert!(!envelope_key_empty(key), "signing key must be non-empty");
    envelope.signature = hmac_sha256_hex(key, &envelope.canonical_bytes());
    envelope
}

/// True iff the signature matches HMAC-SHA256 over the canonical bytes
/// under `key`. Returns false (never errors) for bad signatures, malformed
/// hex, or an empty key.
pub fn verify_envelope(envelope: &Envelope, key: &[u8]) -> bool {
    if envelope_key_empty(key) {
        return false;
    }
    let Ok(sig) = hex::decode(&envelope.signature) else {
        return false;
    };
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(&envelope.canonical_bytes());
    mac.verify_slice(&sig).is_ok()
}

fn envelope_key_empty(key: &[u8]) -> bool {
    key.is_empty()
}

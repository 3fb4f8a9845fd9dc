//! The connector service: one envelope-dispatching endpoint in front of the
//! provider store and the data-space trust layer. Both the in-process
//! harness and the TCP transport drive the same [`ConnectorService::handle`]
//! entry point, so the two run modes enforce identical rules.
//!
//! Authentication: every request except ENROLL must carry a valid HMAC under
//! the sender's enrolment secret. ENROLL requests cannot be signed (the
//! applicant holds no secret yet) and are authenticated by their presented
//! certificate against the approved list instead. Responses are signed with
//! the service key, except ENROLL_ACK (signed with the freshly issued
//! secret, which the ack itself carries) and DATA_RESPONSE (signed with the
//! provider member's key, the data-owning party).

use serde::Deserialize;
use serde_json::{json, Value};

use crate::provider::{Provider, ProviderError, SensorRecord};
use crate::rng::DetRng;
use crate::wire::{sign_envelope, verify_envelope, Envelope, IngestionBatch, MsgType};

use super::{
    BoundingBox, ConnectorCertificate, ContractEvent, DataRequest, DataSpace,
    EnrollmentApplication, MemberRole,
};

/// Sender id the service uses on administrative responses.
pub const SERVICE_ID: &str = "dataspace";

pub struct ConnectorService {
    space: DataSpace,
    provider: Provider,
    service_key: Vec<u8>,
    msg_rng: DetRng,
}

#[derive(Deserialize)]
struct EnrollBody {
    member_id: String,
    display_name: String,
    role: MemberRole,
    cert: ConnectorCertificate,
}

#[derive(Deserialize)]
struct ContractRefBody {
    contract_id: String,
}

#[derive(Deserialize)]
struct DecisionBody {
    contract_id: String,
    decision: String,
}

#[derive(Deserialize)]
struct OfferBody {
    contract_id: String,
    dataset_id: String,
    policy: super::UsagePolicy,
}

#[derive(Deserialize)]
struct DataRequestBody {
    contract_id: String,
    window: (u64, u64),
    #[serde(default)]
    bbox: Option<BoundingBox>,
}

impl ConnectorService {
    pub fn new(
        approved_certs: impl IntoIterator<Item = String>,
        provider: Provider,
        seed: u64,
    ) -> Self {
        let rng = DetRng::new(seed);
        let mut key_rng = rng.derive("service-key");
        Self {
            space: DataSpace::new(approved_certs, seed),
            provider,
            service_key: key_rng.bytes(32),
            msg_rng: rng.derive("service-msg-ids"),
        }
    }

    pub fn space(&self) -> &DataSpace {
        &self.space
    }

    pub fn space_mut(&mut self) -> &mut DataSpace {
        &mut self.space
    }

    pub fn provider(&self) -> &Provider {
        &self.provider
    }

    pub fn provider_mut(&mut self) -> &mut Provider {
        &mut self.provider
    }

    /// Expires due contracts against the simulated clock; called every tick.
    pub fn tick(&mut self, now: u64) {
        self.space.expire_due_contracts(now);
    }

    /// Dispatches one request envelope and produces the response envelope.
    /// Protocol violations become ERROR responses; this never panics on
    /// hostile input.
    pub fn handle(&mut self, request: &Envelope, now: u64) -> Envelope {
        match request.msg_type {
            MsgType::Enroll => self.handle_enroll(request, now),
            MsgType::EnrollAck
            | MsgType::CatalogResult
            | MsgType::DataResponse
            | MsgType::Error => self.error_response(
                request,
                "UnsupportedMessage",
                "response message types cannot be submitted",
            ),
            _ => self.handle_authenticated(request, now),
        }
    }

    fn handle_enroll(&mut self, request: &Envelope, now: u64) -> Envelope {
        let body: EnrollBody = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBody", &e.to_string()),
        };
        if body.member_id != request.sender_id {
            return self.error_response(
                request,
                "MalformedBody",
                "member_id must match the envelope sender",
            );
        }
        let application = EnrollmentApplication {
            member_id: body.member_id,
            display_name: body.display_name,
            role: body.role,
        };
        match self.space.enroll(&application, &body.cert, now) {
            Ok(member) => {
                let ack = Envelope::unsigned(
                    self.msg_rng.hex_id(),
                    SERVICE_ID,
                    MsgType::EnrollAck,
                    json!({
                        "member_id": member.member_id,
                        "role": member.role,
                        "enrolled_at": member.enrolled_at,
                        "shared_secret": hex::encode(&member.shared_secret),
                    }),
                );
                sign_envelope(ack, &member.shared_secret)
            }
            Err(e) => self.error_response(request, e.code(), &e.to_string()),
        }
    }

    fn handle_authenticated(&mut self, request: &Envelope, now: u64) -> Envelope {
        let sender = request.sender_id.clone();
        let member = match self.space.active_member(&sender) {
            Ok(m) => m.clone(),
            Err(e) => {
                self.audit_rejection(&sender, request, e.code(), now);
                return self.error_response(request, e.code(), &e.to_string());
            }
        };
        if !verify_envelope(request, &member.shared_secret) {
            self.audit_rejection(&sender, request, "BadSignature", now);
            return self.error_response(request, "BadSignature", "signature verification failed");
        }

        match request.msg_type {
            MsgType::IngestBatch => self.handle_ingest(request, &member.role),
            MsgType::OfferPublish => self.handle_offer(request, &sender, now),
            MsgType::CatalogQuery => self.catalog_response(request),
            MsgType::ContractRequest => {
                self.handle_negotiation(request, &sender, ContractEvent::ConsumerRequest, now)
            }
            MsgType::ContractDecision => self.handle_decision(request, &sender, now),
            MsgType::ContractCountersign => {
                self.handle_negotiation(request, &sender, ContractEvent::ConsumerCountersign, now)
            }
            MsgType::DataRequest => self.handle_data_request(request, &sender, now),
            _ => unreachable!("filtered in handle()"),
        }
    }

    fn handle_ingest(&mut self, request: &Envelope, role: &MemberRole) -> Envelope {
        if *role != MemberRole::Gateway && *role != MemberRole::Provider {
            return self.error_response(
                request,
                "WrongRole",
                "ingestion requires a gateway member",
            );
        }
        let batch: IngestionBatch = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBatch", &e.to_string()),
        };
        match self.provider.ingest(&batch) {
            Ok(summary) => self.service_response(
                MsgType::IngestBatch,
                json!({
                    "stored": summary.stored,
                    "quarantined": summary.quarantined,
                    "duplicates": summary.duplicates,
                }),
            ),
            Err(e) => self.error_response(request, provider_error_code(&e), &e.to_string()),
        }
    }

    fn handle_offer(&mut self, request: &Envelope, sender: &str, now: u64) -> Envelope {
        let body: OfferBody = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBody", &e.to_string()),
        };
        if !self.provider.dataset_exists(&body.dataset_id) {
            return self.error_response(
                request,
                "UnknownDataset",
                &format!("no dataset {}", body.dataset_id),
            );
        }
        match self.space.publish_offer(
            sender,
            &body.contract_id,
            &body.dataset_id,
            body.policy,
            now,
        ) {
            Ok(contract) => {
                let offer = json!({
                    "contract_id": contract.contract_id,
                    "dataset_id": contract.dataset_id,
                    "provider_id": contract.provider_id,
                    "state": contract.state,
                    "policy": contract.policy,
                    "dataset": self.provider.descriptor(&contract.dataset_id),
                });
                self.service_response(MsgType::CatalogResult, json!({"offers": [offer]}))
            }
            Err(e) => self.error_response(request, e.code(), &e.to_string()),
        }
    }

    fn catalog_response(&mut self, _request: &Envelope) -> Envelope {
        let offers: Vec<Value> = self
            .space
            .catalog()
            .into_iter()
            .map(|contract| {
                json!({
                    "contract_id": contract.contract_id,
                    "dataset_id": contract.dataset_id,
                    "provider_id": contract.provider_id,
                    "state": contract.state,
                    "policy": contract.policy,
                    "dataset": self.provider.descriptor(&contract.dataset_id),
                })
            })
            .collect();
        self.service_response(MsgType::CatalogResult, json!({"offers": offers}))
    }

    fn handle_negotiation(
        &mut self,
        request: &Envelope,
        sender: &str,
        event: ContractEvent,
        now: u64,
    ) -> Envelope {
        let body: ContractRefBody = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBody", &e.to_string()),
        };
        match self.space.negotiate(&body.contract_id, event, sender, now) {
            Ok(state) => self.service_response(
                MsgType::ContractDecision,
                json!({"contract_id": body.contract_id, "state": state}),
            ),
            Err(e) => self.error_response(request, e.code(), &e.to_string()),
        }
    }

    fn handle_decision(&mut self, request: &Envelope, sender: &str, now: u64) -> Envelope {
        let body: DecisionBody = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBody", &e.to_string()),
        };
        let event = match body.decision.as_str() {
            "accept" => ContractEvent::ProviderAccept,
            "reject" => ContractEvent::ProviderReject,
            "revoke" => ContractEvent::ProviderRevoke,
            other => {
                return self.error_response(
                    request,
                    "MalformedBody",
                    &format!("unknown decision {other:?}"),
                )
            }
        };
        match self.space.negotiate(&body.contract_id, event, sender, now) {
            Ok(state) => self.service_response(
                MsgType::ContractDecision,
                json!({"contract_id": body.contract_id, "state": state}),
            ),
            Err(e) => self.error_response(request, e.code(), &e.to_string()),
        }
    }

    fn handle_data_request(&mut self, request: &Envelope, sender: &str, now: u64) -> Envelope {
        let body: DataRequestBody = match serde_json::from_value(request.body.clone()) {
            Ok(b) => b,
            Err(e) => return self.error_response(request, "MalformedBody", &e.to_string()),
        };
        let data_request = DataRequest {
            window: body.window,
            bbox: body.bbox,
        };
        if let Err(e) = self
            .space
            .check_transfer(sender, &body.contract_id, &data_request, now)
        {
            return self.error_response(request, e.code(), &e.to_string());
        }
        let contract = self
            .space
            .contract(&body.contract_id)
            .expect("check_transfer verified existence")
            .clone();
        let records = match self.provider.query_records(
            &contract.dataset_id,
            body.window.0,
            body.window.1,
            None,
        ) {
            Ok(records) => records,
            Err(e) => return self.error_response(request, provider_error_code(&e), &e.to_string()),
        };
        // intersection of policy scope and request bbox, never widening
        let records: Vec<SensorRecord> = records
            .into_iter()
            .filter(|r| {
                contract
                    .policy
                    .spatial_scope
                    .as_ref()
                    .is_none_or(|scope| scope.contains(r.lat, r.lon))
                    && data_request
                        .bbox
                        .as_ref()
                        .is_none_or(|bbox| bbox.contains(r.lat, r.lon))
            })
            .collect();

        let delivered = super::TransferStats {
            record_count: records.len() as u64,
            ts_range: range_of(records.iter().map(|r| r.timestamp_s)),
            lat_range: float_range(records.iter().map(|r| r.lat)),
            lon_range: float_range(records.iter().map(|r| r.lon)),
        };
        self.space
            .record_transfer(&body.contract_id, sender, now, &delivered);

        let provider_key = self
            .space
            .member(&contract.provider_id)
            .expect("offer publisher is enrolled")
            .shared_secret
            .clone();
        let response = Envelope::unsigned(
            self.msg_rng.hex_id(),
            &contract.provider_id,
            MsgType::DataResponse,
            json!({
                "contract_id": body.contract_id,
                "count": records.len(),
                "records": records,
            }),
        );
        sign_envelope(response, &provider_key)
    }

    fn audit_rejection(&mut self, sender: &str, request: &Envelope, code: &str, now: u64) {
        // only data-plane rejections are sovereignty-relevant; the catalog
        // and negotiation paths audit through their own events
        if request.msg_type == MsgType::DataRequest {
            let contract_id = request
                .body
                .get("contract_id")
                .and_then(Value::as_str)
                .unwrap_or("unknown");
            self.space.audit_deny(sender, contract_id, code, now);
        }
    }

    fn service_response(&mut self, msg_type: MsgType, body: Value) -> Envelope {
        let envelope = Envelope::unsigned(self.msg_rng.hex_id(), SERVICE_ID, msg_type, body);
        sign_envelope(envelope, &self.service_key)
    }

    fn error_response(&mut self, request: &Envelope, code: &str, message: &str) -> Envelope {
        self.service_response(
            MsgType::Error,
            json!({
                "code": code,
                "message": message,
                "in_reply_to": request.msg_id,
            }),
        )
    }
}

fn provider_error_code(e: &ProviderError) -> &'static str {
    match e {
        ProviderError::InvalidCoordinates { .. } => "InvalidCoordinates",
        ProviderError::DuplicateDevice(_) => "DuplicateDevice",
        ProviderError::UnknownDataset(_) => "UnknownDataset",
        ProviderError::InvalidWindow { .. } => "InvalidWindow",
        ProviderError::MalformedBatch(_) => "MalformedBatch",
        ProviderError::BadName { .. } => "MalformedBatch",
        ProviderError::Store(_) => "StoreError",
    }
}

fn range_of(values: impl Iterator<Item = u64> + Clone) -> Option<(u64, u64)> {
    let min = values.clone().min()?;
    let max = values.max()?;
    Some((min, max))
}

fn float_range(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for v in values {
        any = true;
        min = min.min(v);
        max = max.max(v);
    }
    any.then_some((min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::SensorRegistration;
    use crate::wire::{AnnotatedFrame, UplinkFrame};

    fn cert(cert_id: &str) -> ConnectorCertificate {
        ConnectorCertificate {
            cert_id: cert_id.into(),
            connector_build_hash: "cafe".into(),
            issued_by: "testlab".into(),
            valid_until: 1_000_000,
        }
    }

    fn service() -> ConnectorService {
        let mut provider = Provider::in_memory();
        provider
            .register_sensor(SensorRegistration {
                device_id: 7,
                lat: 47.5,
                lon: 16.4,
                elevation_m: 230.0,
                label: "s7".into(),
                field_id: "field-a".into(),
            })
            .unwrap();
        ConnectorService::new(
            [
                "cert-p".to_string(),
                "cert-c".to_string(),
                "cert-g".to_string(),
            ],
            provider,
            42,
        )
    }

    fn enroll(svc: &mut ConnectorService, member_id: &str, role: &str, cert_id: &str) -> Vec<u8> {
        let request = Envelope::unsigned(
            "11".repeat(16),
            member_id,
            MsgType::Enroll,
            json!({
                "member_id": member_id,
                "display_name": member_id,
                "role": role,
                "cert": cert(cert_id),
            }),
        );
        let ack = svc.handle(&request, 10);
        assert_eq!(
            ack.msg_type,
            MsgType::EnrollAck,
            "enroll failed: {:?}",
            ack.body
        );
        let secret = hex::decode(ack.body["shared_secret"].as_str().unwrap()).unwrap();
        assert!(
            verify_envelope(&ack, &secret),
            "ack must verify under the issued secret"
        );
        secret
    }

    fn signed(sender: &str, msg_type: MsgType, body: Value, key: &[u8]) -> Envelope {
        sign_envelope(
            Envelope::unsigned("22".repeat(16), sender, msg_type, body),
            key,
        )
    }

    fn setup_active_contract(svc: &mut ConnectorService) -> (Vec<u8>, Vec<u8>) {
        let provider_key = enroll(svc, "provider-1", "provider", "cert-p");
        let consumer_key = enroll(svc, "consumer-1", "consumer", "cert-c");
        let offer = signed(
            "provider-1",
            MsgType::OfferPublish,
            json!({
                "contract_id": "offer-1",
                "dataset_id": "ds-field-a",
                "policy": {
                    "policy_id": "pol-1",
                    "time_window": [0, 100_000],
                    "spatial_scope": null,
                    "max_requests_per_hour": 10,
                    "expires_at": 500_000,
                    "purpose": "frost-monitoring",
                },
            }),
            &provider_key,
        );
        assert_eq!(svc.handle(&offer, 20).msg_type, MsgType::CatalogResult);

        let request = signed(
            "consumer-1",
            MsgType::ContractRequest,
            json!({"contract_id": "offer-1"}),
            &consumer_key,
        );
        assert_eq!(svc.handle(&request, 21).body["state"], "REQUESTED");

        let accept = signed(
            "provider-1",
            MsgType::ContractDecision,
            json!({"contract_id": "offer-1", "decision": "accept"}),
            &provider_key,
        );
        assert_eq!(svc.handle(&accept, 22).body["state"], "AGREED");

        let countersign = signed(
            "consumer-1",
            MsgType::ContractCountersign,
            json!({"contract_id": "offer-1"}),
            &consumer_key,
        );
        assert_eq!(svc.handle(&countersign, 23).body["state"], "ACTIVE");
        (provider_key, consumer_key)
    }

    fn ingest_some(svc: &mut ConnectorService, gateway_key: &[u8]) {
        let batch = IngestionBatch {
            gateway_id: "gw-1".into(),
            received_at_s: 30,
            frames: vec![AnnotatedFrame {
                frame: UplinkFrame::new(7, 1, 25, -310, 100),
                rssi_dbm: -72,
            }],
        };
        let envelope = signed(
            "gw-1",
            MsgType::IngestBatch,
            serde_json::to_value(&batch).unwrap(),
            gateway_key,
        );
        let ack = svc.handle(&envelope, 30);
        assert_eq!(ack.msg_type, MsgType::IngestBatch, "{:?}", ack.body);
        assert_eq!(ack.body["stored"], 1);
    }

    #[test]
    fn full_protocol_happy_path() {
        let mut svc = service();
        let gateway_key = enroll(&mut svc, "gw-1", "gateway", "cert-g");
        let (provider_key, consumer_key) = setup_active_contract(&mut svc);
        ingest_some(&mut svc, &gateway_key);

        let data_request = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            &consumer_key,
        );
        let response = svc.handle(&data_request, 40);
        assert_eq!(
            response.msg_type,
            MsgType::DataResponse,
            "{:?}",
            response.body
        );
        assert_eq!(response.body["count"], 1);
        assert_eq!(response.sender_id, "provider-1");
        assert!(
            verify_envelope(&response, &provider_key),
            "data response must carry the provider's signature"
        );
        let transfers = svc
            .space()
            .audit()
            .records()
            .iter()
            .filter(|r| r.event == super::super::AuditEvent::DataTransfer)
            .count();
        assert_eq!(transfers, 1);
    }

    #[test]
    fn agreed_contract_without_countersign_is_denied() {
        let mut svc = service();
        let provider_key = enroll(&mut svc, "provider-1", "provider", "cert-p");
        let consumer_key = enroll(&mut svc, "consumer-1", "consumer", "cert-c");
        let offer = signed(
            "provider-1",
            MsgType::OfferPublish,
            json!({
                "contract_id": "offer-1",
                "dataset_id": "ds-field-a",
                "policy": crate::dataspace::UsagePolicy::test_default(),
            }),
            &provider_key,
        );
        svc.handle(&offer, 20);
        let request = signed(
            "consumer-1",
            MsgType::ContractRequest,
            json!({"contract_id": "offer-1"}),
            &consumer_key,
        );
        svc.handle(&request, 21);
        let accept = signed(
            "provider-1",
            MsgType::ContractDecision,
            json!({"contract_id": "offer-1", "decision": "accept"}),
            &provider_key,
        );
        svc.handle(&accept, 22);

        let data_request = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            &consumer_key,
        );
        let response = svc.handle(&data_request, 30);
        assert_eq!(response.msg_type, MsgType::Error);
        assert_eq!(response.body["code"], "ContractNotActive");
    }

    #[test]
    fn unknown_sender_gets_zero_records_and_an_audited_deny() {
        let mut svc = service();
        setup_active_contract(&mut svc);
        let stranger = signed(
            "stranger",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            b"made-up-key-material",
        );
        let response = svc.handle(&stranger, 40);
        assert_eq!(response.msg_type, MsgType::Error);
        assert_eq!(response.body["code"], "NotEnrolled");
        assert!(response.body["records"].is_null());
        let denies = svc
            .space()
            .audit()
            .records()
            .iter()
            .filter(|r| r.event == super::super::AuditEvent::PolicyDeny)
            .count();
        assert_eq!(denies, 1);
    }

    #[test]
    fn wrong_key_is_a_bad_signature() {
        let mut svc = service();
        let (_, consumer_key) = setup_active_contract(&mut svc);
        let mut wrong_key = consumer_key.clone();
        wrong_key[0] ^= 0xFF;
        let forged = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            &wrong_key,
        );
        let response = svc.handle(&forged, 40);
        assert_eq!(response.msg_type, MsgType::Error);
        assert_eq!(response.body["code"], "BadSignature");
    }

    #[test]
    fn tampered_body_after_signing_is_rejected() {
        let mut svc = service();
        let (_, consumer_key) = setup_active_contract(&mut svc);
        let mut request = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            &consumer_key,
        );
        request.body["window"] = json!([0, 99_999]);
        let response = svc.handle(&request, 40);
        assert_eq!(response.body["code"], "BadSignature");
    }

    #[test]
    fn catalog_lists_offers_with_dataset_descriptors() {
        let mut svc = service();
        let (_, consumer_key) = setup_active_contract(&mut svc);
        // offer-1 was consumed by the negotiation; publish another
        let provider_key = svc
            .space()
            .member("provider-1")
            .unwrap()
            .shared_secret
            .clone();
        let mut policy = crate::dataspace::UsagePolicy::test_default();
        policy.policy_id = "pol-2".into();
        let offer = signed(
            "provider-1",
            MsgType::OfferPublish,
            json!({"contract_id": "offer-2", "dataset_id": "ds-field-a", "policy": policy}),
            &provider_key,
        );
        svc.handle(&offer, 50);
        let query = signed(
            "consumer-1",
            MsgType::CatalogQuery,
            json!({}),
            &consumer_key,
        );
        let result = svc.handle(&query, 51);
        assert_eq!(result.msg_type, MsgType::CatalogResult);
        let offers = result.body["offers"].as_array().unwrap();
        assert_eq!(offers.len(), 1);
        assert_eq!(offers[0]["contract_id"], "offer-2");
        assert_eq!(offers[0]["dataset"]["field_id"], "field-a");
    }

    #[test]
    fn malformed_bodies_become_error_envelopes() {
        let mut svc = service();
        let (_, consumer_key) = setup_active_contract(&mut svc);
        let garbled = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"window": "not-a-window"}),
            &consumer_key,
        );
        let response = svc.handle(&garbled, 40);
        assert_eq!(response.msg_type, MsgType::Error);
        assert_eq!(response.body["code"], "MalformedBody");
    }

    #[test]
    fn response_types_cannot_be_submitted() {
        let mut svc = service();
        let (_, consumer_key) = setup_active_contract(&mut svc);
        for msg_type in [
            MsgType::EnrollAck,
            MsgType::CatalogResult,
            MsgType::DataResponse,
            MsgType::Error,
        ] {
            let bogus = signed("consumer-1", msg_type, json!({}), &consumer_key);
            let response = svc.handle(&bogus, 40);
            assert_eq!(response.msg_type, MsgType::Error);
            assert_eq!(response.body["code"], "UnsupportedMessage");
        }
    }

    #[test]
    fn spatial_scope_filters_delivered_records() {
        let mut svc = service();
        // second sensor far outside the scope
        svc.provider_mut()
            .register_sensor(SensorRegistration {
                device_id: 8,
                lat: 48.9,
                lon: 16.4,
                elevation_m: 190.0,
                label: "s8".into(),
                field_id: "field-a".into(),
            })
            .unwrap();
        let gateway_key = enroll(&mut svc, "gw-1", "gateway", "cert-g");
        let provider_key = enroll(&mut svc, "provider-1", "provider", "cert-p");
        let consumer_key = enroll(&mut svc, "consumer-1", "consumer", "cert-c");

        let batch = IngestionBatch {
            gateway_id: "gw-1".into(),
            received_at_s: 30,
            frames: vec![
                AnnotatedFrame {
                    frame: UplinkFrame::new(7, 1, 25, -310, 100),
                    rssi_dbm: -72,
                },
                AnnotatedFrame {
                    frame: UplinkFrame::new(8, 1, 25, -150, 100),
                    rssi_dbm: -88,
                },
            ],
        };
        let envelope = signed(
            "gw-1",
            MsgType::IngestBatch,
            serde_json::to_value(&batch).unwrap(),
            &gateway_key,
        );
        svc.handle(&envelope, 30);

        let offer = signed(
            "provider-1",
            MsgType::OfferPublish,
            json!({
                "contract_id": "offer-1",
                "dataset_id": "ds-field-a",
                "policy": {
                    "policy_id": "pol-1",
                    "time_window": [0, 100_000],
                    "spatial_scope": {"lat_min": 47.0, "lat_max": 48.0, "lon_min": 16.0, "lon_max": 17.0},
                    "max_requests_per_hour": 10,
                    "expires_at": 500_000,
                    "purpose": "frost-monitoring",
                },
            }),
            &provider_key,
        );
        svc.handle(&offer, 31);
        for (msg_type, sender, body, key) in [
            (
                MsgType::ContractRequest,
                "consumer-1",
                json!({"contract_id": "offer-1"}),
                &consumer_key,
            ),
            (
                MsgType::ContractDecision,
                "provider-1",
                json!({"contract_id": "offer-1", "decision": "accept"}),
                &provider_key,
            ),
            (
                MsgType::ContractCountersign,
                "consumer-1",
                json!({"contract_id": "offer-1"}),
                &consumer_key,
            ),
        ] {
            let response = svc.handle(&signed(sender, msg_type, body, key), 32);
            assert_eq!(response.msg_type, MsgType::ContractDecision);
        }

        let data_request = signed(
            "consumer-1",
            MsgType::DataRequest,
            json!({"contract_id": "offer-1", "window": [0, 1000]}),
            &consumer_key,
        );
        let response = svc.handle(&data_request, 40);
        assert_eq!(response.msg_type, MsgType::DataResponse);
        // sensor 8 at lat 48.9 is outside the policy scope
        assert_eq!(response.body["count"], 1);
        assert_eq!(response.body["records"][0]["device_id"], 7);
    }
}

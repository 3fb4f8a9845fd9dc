//! The data-space trust layer: membership enrolment, connector
//! certification, dataset offers with usage policies, contract negotiation,
//! policy-enforced transfer authorization, and the tamper-evident audit log.
//!
//! Nothing in the data space touches sensor data directly; it decides who
//! may see what, and leaves fetching to the provider (see
//! [`service::ConnectorService`] for the composition).

mod audit;
mod contract;
mod policy;
pub mod service;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::rng::DetRng;

pub use audit::{verify_audit_chain, AuditEvent, AuditLog, AuditRecord};
pub use contract::{Contract, ContractEvent, ContractState, NegotiationError, TransitionRecord};
pub use policy::{
    evaluate_policy, BoundingBox, DataRequest, DenyReason, PolicyDecision, PolicyError, UsagePolicy,
};

/// Secrets issued at enrolment are 32 bytes (the invariant demands ≥ 16).
pub const SHARED_SECRET_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberRole {
    Provider,
    Consumer,
    Gateway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberStatus {
    Active,
    Revoked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberIdentity {
    pub member_id: String,
    pub display_name: String,
    pub role: MemberRole,
    /// Per-member HMAC key, issued at enrolment. Never serialized wholesale;
    /// the enrolment ack carries it hex-encoded to its owner.
    pub shared_secret: Vec<u8>,
    pub enrolled_at: u64,
    pub status: MemberStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorCertificate {
    pub cert_id: String,
    pub connector_build_hash: String,
    pub issued_by: String,
    pub valid_until: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentApplication {
    pub member_id: String,
    pub display_name: String,
    pub role: MemberRole,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyTally {
    pub allow: u64,
    pub deny: BTreeMap<String, u64>,
}

/// What a completed transfer delivered, as recorded in the audit log.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransferStats {
    pub record_count: u64,
    pub ts_range: Option<(u64, u64)>,
    pub lat_range: Option<(f64, f64)>,
    pub lon_range: Option<(f64, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DataSpaceError {
    #[error("certificate {0} is not on the approved list")]
    CertificateNotApproved(String),
    #[error("certificate {cert_id} expired at {valid_until} (now {now})")]
    CertificateExpired {
        cert_id: String,
        valid_until: u64,
        now: u64,
    },
    #[error("member {0} already enrolled")]
    DuplicateMember(String),
    #[error("{0} is not an enrolled, active member")]
    NotEnrolled(String),
    #[error("unknown contract {0}")]
    UnknownContract(String),
    #[error("contract {0} already exists")]
    DuplicateContract(String),
    #[error("member {member} has role {role:?}, operation requires {required:?}")]
    WrongRole {
        member: String,
        role: MemberRole,
        required: MemberRole,
    },
    #[error("{consumer} is not the consumer bound to contract {contract_id}")]
    WrongConsumer {
        consumer: String,
        contract_id: String,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
    #[error("denied: {}", .0.as_str())]
    Denied(DenyReason),
}

impl DataSpaceError {
    /// Stable machine-readable code used in ERROR envelopes and audit
    /// details.
    pub fn code(&self) -> &'static str {
        match self {
            Self::CertificateNotApproved(_) => "CertificateNotApproved",
            Self::CertificateExpired { .. } => "CertificateExpired",
            Self::DuplicateMember(_) => "DuplicateMember",
            Self::NotEnrolled(_) => "NotEnrolled",
            Self::UnknownContract(_) => "UnknownContract",
            Self::DuplicateContract(_) => "DuplicateContract",
            Self::WrongRole { .. } => "WrongRole",
            Self::WrongConsumer { .. } => "WrongConsumer",
            Self::Policy(_) => "InvalidPolicy",
            Self::Negotiation(NegotiationError::InvalidTransition { .. }) => "InvalidTransition",
            Self::Negotiation(NegotiationError::WrongActor { .. }) => "WrongActor",
            Self::Denied(reason) => reason.as_str(),
        }
    }
}

#[derive(Debug)]
pub struct DataSpace {
    approved_certs: BTreeSet<String>,
    members: BTreeMap<String, MemberIdentity>,
    contracts: BTreeMap<String, Contract>,
    audit: AuditLog,
    /// Timestamps of allowed transfers per contract (rate-limit evidence).
    transfer_times: BTreeMap<String, Vec<u64>>,
    /// Allow/deny counts per policy id, for the run report.
    policy_tallies: BTreeMap<String, PolicyTally>,
    secret_rng: DetRng,
}

impl DataSpace {
    /// `approved_certs` is the static certification list from configuration;
    /// `seed` drives secret issuance deterministically.
    pub fn new(approved_certs: impl IntoIterator<Item = String>, seed: u64) -> Self {
        Self {
            approved_certs: approved_certs.into_iter().collect(),
            members: BTreeMap::new(),
            contracts: BTreeMap::new(),
            audit: AuditLog::new(),
            transfer_times: BTreeMap::new(),
            policy_tallies: BTreeMap::new(),
            secret_rng: DetRng::new(seed).derive("member-secrets"),
        }
    }

    /// Enrols a new member. The presented certificate must be on the
    /// approved list and unexpired; the member id must be fresh.
    pub fn enroll(
        &mut self,
        application: &EnrollmentApplication,
        cert: &ConnectorCertificate,
        now: u64,
    ) -> Result<MemberIdentity, DataSpaceError> {
        if !self.approved_certs.contains(&cert.cert_id) {
            return Err(DataSpaceError::CertificateNotApproved(cert.cert_id.clone()));
        }
        if now >= cert.valid_until {
            return Err(DataSpaceError::CertificateExpired {
                cert_id: cert.cert_id.clone(),
                valid_until: cert.valid_until,
                now,
            });
        }
        if self.members.contains_key(&application.member_id) {
            return Err(DataSpaceError::DuplicateMember(
                application.member_id.clone(),
            ));
        }
        let member = MemberIdentity {
            member_id: application.member_id.clone(),
            display_name: application.display_name.clone(),
            role: application.role,
            shared_secret: self.secret_rng.bytes(SHARED_SECRET_LEN),
            enrolled_at: now,
            status: MemberStatus::Active,
        };
        self.members
            .insert(member.member_id.clone(), member.clone());
        self.audit.append(
            now,
            &member.member_id,
            AuditEvent::Enroll,
            json!({
                "member_id": member.member_id,
                "role": member.role,
                "cert_id": cert.cert_id,
            }),
        );
        Ok(member)
    }

    pub fn member(&self, member_id: &str) -> Option<&MemberIdentity> {
        self.members.get(member_id)
    }

    /// The member, provided they are enrolled and not revoked.
    pub fn active_member(&self, member_id: &str) -> Result<&MemberIdentity, DataSpaceError> {
        match self.members.get(member_id) {
            Some(m) if m.status == MemberStatus::Active => Ok(m),
            _ => Err(DataSpaceError::NotEnrolled(member_id.to_string())),
        }
    }

    /// Revokes a membership (authority action). Revoked members fail every
    /// subsequent operation.
    pub fn revoke_member(&mut self, member_id: &str, now: u64) -> Result<(), DataSpaceError> {
        let member = self
            .members
            .get_mut(member_id)
            .ok_or_else(|| DataSpaceError::NotEnrolled(member_id.to_string()))?;
        member.status = MemberStatus::Revoked;
        self.audit.append(
            now,
            "system",
            AuditEvent::Revoke,
            json!({"kind": "member", "member_id": member_id}),
        );
        Ok(())
    }

    /// Publishes a dataset offer as a contract in state OFFERED. The caller
    /// (the connector service) has already checked that the dataset exists
    /// at this provider.
    pub fn publish_offer(
        &mut self,
        provider_id: &str,
        contract_id: &str,
        dataset_id: &str,
        policy: UsagePolicy,
        now: u64,
    ) -> Result<&Contract, DataSpaceError> {
        let member = self.active_member(provider_id)?;
        if member.role != MemberRole::Provider {
            return Err(DataSpaceError::WrongRole {
                member: provider_id.to_string(),
                role: member.role,
                required: MemberRole::Provider,
            });
        }
        policy.validate()?;
        if self.contracts.contains_key(contract_id) {
            return Err(DataSpaceError::DuplicateContract(contract_id.to_string()));
        }
        let contract = Contract::offered(contract_id, dataset_id, provider_id, policy, now);
        self.audit.append(
            now,
            provider_id,
            AuditEvent::Offer,
            json!({
                "contract_id": contract_id,
                "dataset_id": dataset_id,
                "provider_id": provider_id,
                "policy": contract.policy,
            }),
        );
        self.contracts.insert(contract_id.to_string(), contract);
        Ok(&self.contracts[contract_id])
    }

    /// Offers currently visible in the catalog.
    pub fn catalog(&self) -> Vec<&Contract> {
        self.contracts
            .values()
            .filter(|c| c.state == ContractState::Offered)
            .collect()
    }

    pub fn contract(&self, contract_id: &str) -> Option<&Contract> {
        self.contracts.get(contract_id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    /// Applies one negotiation event on behalf of `actor` (who must be
    /// enrolled and active, except for the system-driven expiry).
    pub fn negotiate(
        &mut self,
        contract_id: &str,
        event: ContractEvent,
        actor: &str,
        now: u64,
    ) -> Result<ContractState, DataSpaceError> {
        if event != ContractEvent::ClockPastExpiry {
            self.active_member(actor)?;
        }
        let contract = self
            .contracts
            .get_mut(contract_id)
            .ok_or_else(|| DataSpaceError::UnknownContract(contract_id.to_string()))?;
        let state = contract.apply(event, actor, now)?;
        let (audit_event, details) = match event {
            ContractEvent::ConsumerRequest => (
                AuditEvent::Request,
                json!({"contract_id": contract_id, "consumer_id": actor}),
            ),
            ContractEvent::ProviderAccept => (
                AuditEvent::Decision,
                json!({"contract_id": contract_id, "decision": "accept"}),
            ),
            ContractEvent::ProviderReject => (
                AuditEvent::Decision,
                json!({"contract_id": contract_id, "decision": "reject"}),
            ),
            ContractEvent::ConsumerCountersign => (
                AuditEvent::Countersign,
                json!({"contract_id": contract_id, "consumer_id": actor}),
            ),
            ContractEvent::ProviderRevoke => (
                AuditEvent::Revoke,
                json!({"kind": "contract", "contract_id": contract_id}),
            ),
            ContractEvent::ClockPastExpiry => (
                AuditEvent::Decision,
                json!({"contract_id": contract_id, "decision": "expire"}),
            ),
        };
        self.audit.append(now, actor, audit_event, details);
        Ok(state)
    }

    /// Expires every non-terminal contract whose policy `expires_at` has
    /// passed. Driven by the harness clock each tick.
    pub fn expire_due_contracts(&mut self, now: u64) -> Vec<String> {
        let due: Vec<String> = self
            .contracts
            .values()
            .filter(|c| !c.state.is_terminal() && now >= c.policy.expires_at)
            .map(|c| c.contract_id.clone())
            .collect();
        for contract_id in &due {
            self.negotiate(contract_id, ContractEvent::ClockPastExpiry, "system", now)
                .expect("expiry of a non-terminal contract cannot fail");
        }
        due
    }

    /// Authorizes a transfer under a contract. On success the transfer is
    /// counted against the rate limit; the caller fetches the records and
    /// then reports them via [`DataSpace::record_transfer`]. Denials are
    /// audited as POLICY_DENY and tallied.
    pub fn check_transfer(
        &mut self,
        consumer_id: &str,
        contract_id: &str,
        request: &DataRequest,
        now: u64,
    ) -> Result<(), DataSpaceError> {
        if let Err(e) = self.active_member(consumer_id) {
            self.audit_deny(consumer_id, contract_id, e.code(), now);
            return Err(e);
        }
        let Some(contract) = self.contracts.get(contract_id) else {
            let e = DataSpaceError::UnknownContract(contract_id.to_string());
            self.audit_deny(consumer_id, contract_id, e.code(), now);
            return Err(e);
        };
        if contract.state == ContractState::Active
            && contract.consumer_id.as_deref() != Some(consumer_id)
        {
            let e = DataSpaceError::WrongConsumer {
                consumer: consumer_id.to_string(),
                contract_id: contract_id.to_string(),
            };
            self.audit_deny(consumer_id, contract_id, e.code(), now);
            return Err(e);
        }
        let policy_id = contract.policy.policy_id.clone();
        let recent = self
            .transfer_times
            .get(contract_id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        match evaluate_policy(request, contract, now, recent) {
            PolicyDecision::Allow => {
                self.transfer_times
                    .entry(contract_id.to_string())
                    .or_default()
                    .push(now);
                self.policy_tallies.entry(policy_id).or_default().allow += 1;
                Ok(())
            }
            PolicyDecision::Deny(reason) => {
                *self
                    .policy_tallies
                    .entry(policy_id)
                    .or_default()
                    .deny
                    .entry(reason.as_str().to_string())
                    .or_default() += 1;
                self.audit_deny(consumer_id, contract_id, reason.as_str(), now);
                Err(DataSpaceError::Denied(reason))
            }
        }
    }

    fn audit_deny(&mut self, actor: &str, contract_id: &str, reason: &str, now: u64) {
        self.audit.append(
            now,
            actor,
            AuditEvent::PolicyDeny,
            json!({"contract_id": contract_id, "reason": reason}),
        );
    }

    /// Records a completed transfer with enough detail for post-hoc audit
    /// analysis: count plus the timestamp and coordinate ranges of the
    /// delivered records.
    pub fn record_transfer(
        &mut self,
        contract_id: &str,
        consumer_id: &str,
        now: u64,
        delivered: &TransferStats,
    ) {
        self.audit.append(
            now,
            consumer_id,
            AuditEvent::DataTransfer,
            json!({
                "contract_id": contract_id,
                "consumer_id": consumer_id,
                "record_count": delivered.record_count,
                "ts_range": delivered.ts_range,
                "lat_range": delivered.lat_range,
                "lon_range": delivered.lon_range,
            }),
        );
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn policy_tallies(&self) -> &BTreeMap<String, PolicyTally> {
        &self.policy_tallies
    }

    pub fn transfer_times(&self, contract_id: &str) -> &[u64] {
        self.transfer_times
            .get(contract_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

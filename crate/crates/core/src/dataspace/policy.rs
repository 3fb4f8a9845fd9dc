//! Usage policies and their enforcement.
//!
//! A policy is the machine-checkable form of the conditions a provider
//! attaches to a dataset offer: a time window over record timestamps, an
//! optional spatial scope, a request-rate cap, an expiry instant, and a
//! purpose tag. Transfers apply the intersection of policy and request —
//! a request can narrow what it receives, never widen it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::contract::{Contract, ContractState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn is_well_ordered(&self) -> bool {
        self.lat_min <= self.lat_max && self.lon_min <= self.lon_max
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    /// True iff `other` lies entirely inside `self`.
    pub fn covers(&self, other: &BoundingBox) -> bool {
        other.lat_min >= self.lat_min
            && other.lat_max <= self.lat_max
            && other.lon_min >= self.lon_min
            && other.lon_max <= self.lon_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsagePolicy {
    pub policy_id: String,
    /// `[a, b]` over record timestamps, inclusive.
    pub time_window: (u64, u64),
    pub spatial_scope: Option<BoundingBox>,
    pub max_requests_per_hour: u32,
    pub expires_at: u64,
    pub purpose: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid policy: {0}")]
    Invalid(String),
}

impl UsagePolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.time_window.0 > self.time_window.1 {
            return Err(PolicyError::Invalid(format!(
                "time window {} > {}",
                self.time_window.0, self.time_window.1
            )));
        }
        if let Some(bbox) = &self.spatial_scope {
            if !bbox.is_well_ordered() {
                return Err(PolicyError::Invalid("bounding box not well-ordered".into()));
            }
        }
        if self.max_requests_per_hour < 1 {
            return Err(PolicyError::Invalid(
                "max_requests_per_hour must be >= 1".into(),
            ));
        }
        Ok(())
    }

    #[cfg(test)]
    pub fn test_default() -> Self {
        Self {
            policy_id: "pol-1".into(),
            time_window: (0, 1_000_000),
            spatial_scope: None,
            max_requests_per_hour: 100,
            expires_at: 2_000_000,
            purpose: "frost-monitoring".into(),
        }
    }
}

/// A consumer's data request: time window plus optional spatial filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRequest {
    pub window: (u64, u64),
    pub bbox: Option<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenyReason {
    WindowViolation,
    ScopeViolation,
    RateExceeded,
    ContractExpired,
    ContractNotActive,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WindowViolation => "WindowViolation",
            Self::ScopeViolation => "ScopeViolation",
            Self::RateExceeded => "RateExceeded",
            Self::ContractExpired => "ContractExpired",
            Self::ContractNotActive => "ContractNotActive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyDecision {
    Allow,
    Deny(DenyReason),
}

/// Evaluates a request against a contract's policy.
///
/// Allow iff the contract is ACTIVE, `now < expires_at`, the request window
/// lies inside the policy window, the request bbox (when present) lies
/// inside the spatial scope (when set), and fewer than
/// `max_requests_per_hour` transfers were allowed in the trailing 3600 s.
/// `recent_allowed` holds the timestamps of previously allowed transfers
/// under this contract.
pub fn evaluate_policy(
    request: &DataRequest,
    contract: &Contract,
    now: u64,
    recent_allowed: &[u64],
) -> PolicyDecision {
    if contract.state != ContractState::Active {
        return PolicyDecision::Deny(DenyReason::ContractNotActive);
    }
    let policy = &contract.policy;
    if now >= policy.expires_at {
        return PolicyDecision::Deny(DenyReason::ContractExpired);
    }
    let (req_a, req_b) = request.window;
    let (pol_a, pol_b) = policy.time_window;
    if req_a > req_b || req_a < pol_a || req_b > pol_b {
        return PolicyDecision::Deny(DenyReason::WindowViolation);
    }
    if let (Some(req_bbox), Some(scope)) = (&request.bbox, &policy.spatial_scope) {
        if !req_bbox.is_well_ordered() || !scope.covers(req_bbox) {
            return PolicyDecision::Deny(DenyReason::ScopeViolation);
        }
    }
    let in_trailing_hour = recent_allowed
        .iter()
        .filter(|&&ts| ts <= now && ts + 3600 > now)
        .count();
    if in_trailing_hour >= policy.max_requests_per_hour as usize {
        return PolicyDecision::Deny(DenyReason::RateExceeded);
    }
    PolicyDecision::Allow
}

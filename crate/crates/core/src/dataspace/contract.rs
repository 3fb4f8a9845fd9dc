//! Contract lifecycle state machine.
//!
//! ```text
//! OFFERED   --ConsumerRequest(consumer)----> REQUESTED
//! REQUESTED --ProviderAccept(provider)-----> AGREED
//! REQUESTED --ProviderReject(provider)-----> REJECTED
//! AGREED    --ConsumerCountersign(consumer)> ACTIVE
//! {OFFERED, REQUESTED, AGREED, ACTIVE}
//!           --ProviderRevoke(provider)-----> REVOKED
//! any non-terminal
//!           --ClockPastExpiry(system)------> EXPIRED
//! ```
//!
//! Every other (state, event) pair is an `InvalidTransition`. The transition
//! function is deterministic and total over this table, so replaying an
//! event log always reconstructs the same state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::UsagePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContractState {
    Offered,
    Requested,
    Agreed,
    Active,
    Rejected,
    Expired,
    Revoked,
}

impl ContractState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Rejected | Self::Expired | Self::Revoked)
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            Self::Offered => "OFFERED",
            Self::Requested => "REQUESTED",
            Self::Agreed => "AGREED",
            Self::Active => "ACTIVE",
            Self::Rejected => "REJECTED",
            Self::Expired => "EXPIRED",
            Self::Revoked => "REVOKED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractEvent {
    ConsumerRequest,
    ProviderAccept,
    ProviderReject,
    ConsumerCountersign,
    ProviderRevoke,
    ClockPastExpiry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: ContractState,
    pub actor: String,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub contract_id: String,
    pub dataset_id: String,
    pub provider_id: String,
    /// Bound when a consumer requests the offer.
    pub consumer_id: Option<String>,
    pub policy: UsagePolicy,
    pub state: ContractState,
    /// Append-only transition history, starting with the OFFERED entry.
    pub history: Vec<TransitionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NegotiationError {
    #[error("no transition from {state:?} on {event:?}")]
    InvalidTransition {
        state: ContractState,
        event: ContractEvent,
    },
    #[error("actor {actor} is not the {expected} party of this contract")]
    WrongActor {
        actor: String,
        expected: &'static str,
    },
}

impl Contract {
    pub fn offered(
        contract_id: &str,
        dataset_id: &str,
        provider_id: &str,
        policy: UsagePolicy,
        at: u64,
    ) -> Self {
        Self {
            contract_id: contract_id.to_string(),
            dataset_id: dataset_id.to_string(),
            provider_id: provider_id.to_string(),
            consumer_id: None,
            policy,
            state: ContractState::Offered,
            history: vec![TransitionRecord {
                state: ContractState::Offered,
                actor: provider_id.to_string(),
                at,
            }],
        }
    }

    /// Applies one lifecycle event, checking the transition table and that
    /// the actor is the appropriate party. `ClockPastExpiry` is the one
    /// system-driven event; its actor is recorded verbatim.
    pub fn apply(
        &mut self,
        event: ContractEvent,
        actor: &str,
        now: u64,
    ) -> Result<ContractState, NegotiationError> {
        use ContractEvent as E;
        use ContractState as S;

        let next = match (self.state, event) {
            (S::Offered, E::ConsumerRequest) => {
                // first requester binds the contract to itself
                S::Requested
            }
            (S::Requested, E::ProviderAccept) => {
                self.require_provider(actor)?;
                S::Agreed
            }
            (S::Requested, E::ProviderReject) => {
                self.require_provider(actor)?;
                S::Rejected
            }
            (S::Agreed, E::ConsumerCountersign) => {
                self.require_consumer(actor)?;
                S::Active
            }
            (S::Offered | S::Requested | S::Agreed | S::Active, E::ProviderRevoke) => {
                self.require_provider(actor)?;
                S::Revoked
            }
            (state, E::ClockPastExpiry) if !state.is_terminal() => S::Expired,
            (state, event) => return Err(NegotiationError::InvalidTransition { state, event }),
        };

        if event == ContractEvent::ConsumerRequest {
            self.consumer_id = Some(actor.to_string());
        }
        self.state = next;
        self.history.push(TransitionRecord {
            state: next,
            actor: actor.to_string(),
            at: now,
        });
        Ok(next)
    }

    fn require_provider(&self, actor: &str) -> Result<(), NegotiationError> {
        if actor != self.provider_id {
            return Err(NegotiationError::WrongActor {
                actor: actor.to_string(),
                expected: "provider",
            });
        }
        Ok(())
    }

    fn require_consumer(&self, actor: &str) -> Result<(), NegotiationError> {
        if self.consumer_id.as_deref() != Some(actor) {
            return Err(NegotiationError::WrongActor {
                actor: actor.to_string(),
                expected: "consumer",
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataspace::policy::UsagePolicy;

    fn contract() -> Contract {
        Contract::offered(
            "offer-1",
            "ds-field-a",
            "provider-1",
            UsagePolicy::test_default(),
            0,
        )
    }

    #[test]
    fn happy_path_to_active() {
        let mut c = contract();
        assert_eq!(
            c.apply(ContractEvent::ConsumerRequest, "consumer-1", 10)
                .unwrap(),
            ContractState::Requested
        );
        assert_eq!(c.consumer_id.as_deref(), Some("consumer-1"));
        assert_eq!(
            c.apply(ContractEvent::ProviderAccept, "provider-1", 20)
                .unwrap(),
            ContractState::Agreed
        );
        assert_eq!(
            c.apply(ContractEvent::ConsumerCountersign, "consumer-1", 30)
                .unwrap(),
            ContractState::Active
        );
        assert!(!c.state.is_terminal());
        assert_eq!(c.history.len(), 4);
        assert_eq!(c.history[0].state, ContractState::Offered);
    }

    #[test]
    fn reject_path() {
        let mut c = contract();
        c.apply(ContractEvent::ConsumerRequest, "consumer-1", 10)
            .unwrap();
        assert_eq!(
            c.apply(ContractEvent::ProviderReject, "provider-1", 20)
                .unwrap(),
            ContractState::Rejected
        );
        assert!(c.state.is_terminal());
    }

    #[test]
    fn countersign_before_agreement_is_invalid() {
        let mut c = contract();
        assert_eq!(
            c.apply(ContractEvent::ConsumerCountersign, "consumer-1", 10),
            Err(NegotiationError::InvalidTransition {
                state: ContractState::Offered,
                event: ContractEvent::ConsumerCountersign,
            })
        );
    }

    #[test]
    fn wrong_actor_is_rejected() {
        let mut c = contract();
        c.apply(ContractEvent::ConsumerRequest, "consumer-1", 10)
            .unwrap();
        assert!(matches!(
            c.apply(ContractEvent::ProviderAccept, "consumer-1", 20),
            Err(NegotiationError::WrongActor { .. })
        ));
        c.apply(ContractEvent::ProviderAccept, "provider-1", 20)
            .unwrap();
        // only the bound consumer may countersign
        assert!(matches!(
            c.apply(ContractEvent::ConsumerCountersign, "consumer-2", 30),
            Err(NegotiationError::WrongActor { .. })
        ));
    }

    #[test]
    fn provider_can_revoke_any_live_state() {
        for advance in 0..4 {
            let mut c = contract();
            let script: [(ContractEvent, &str); 3] = [
                (ContractEvent::ConsumerRequest, "consumer-1"),
                (ContractEvent::ProviderAccept, "provider-1"),
                (ContractEvent::ConsumerCountersign, "consumer-1"),
            ];
            for (event, actor) in script.iter().take(advance) {
                c.apply(*event, actor, 1).unwrap();
            }
            assert_eq!(
                c.apply(ContractEvent::ProviderRevoke, "provider-1", 99)
                    .unwrap(),
                ContractState::Revoked
            );
        }
    }

    #[test]
    fn expiry_applies_to_any_non_terminal_state() {
        let mut c = contract();
        assert_eq!(
            c.apply(ContractEvent::ClockPastExpiry, "system", 10)
                .unwrap(),
            ContractState::Expired
        );
        // terminal states cannot expire again
        assert!(matches!(
            c.apply(ContractEvent::ClockPastExpiry, "system", 11),
            Err(NegotiationError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn replaying_history_reconstructs_state() {
        let mut c = contract();
        let events: Vec<(ContractEvent, String, u64)> = vec![
            (ContractEvent::ConsumerRequest, "consumer-1".into(), 10),
            (ContractEvent::ProviderAccept, "provider-1".into(), 20),
            (ContractEvent::ConsumerCountersign, "consumer-1".into(), 30),
            (ContractEvent::ProviderRevoke, "provider-1".into(), 40),
        ];
        for (event, actor, at) in &events {
            c.apply(*event, actor, *at).unwrap();
        }
        let mut replay = contract();
        for (event, actor, at) in &events {
            replay.apply(*event, actor, *at).unwrap();
        }
        assert_eq!(c, replay);
    }
}

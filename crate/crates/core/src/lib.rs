//! Field-to-consumer temperature monitoring testbed.
//!
//! A complete desk-scale pipeline: simulated field sensors emit binary
//! uplink frames through a gateway to a provider service, which shares its
//! datasets only through an enrolled, certified, contract-governed
//! data-space connection; the consumer side runs frost analytics that
//! localize mitigation to specific field zones.
//!
//! Module map:
//! - [`wire`] — byte-exact codecs: uplink frames, signed envelopes, framing
//! - [`sensorsim`] — deterministic field/sensor simulation with frost events
//! - [`gateway`] — replay protection, RSSI annotation, batched forwarding
//! - [`provider`] — ingestion, GPS enrichment, append-only record store
//! - [`dataspace`] — enrolment, certification, offers, contracts, policy
//!   enforcement, tamper-evident audit log, and the connector service
//! - [`frost`] — IDW interpolation, cold-zone detection, cooling trends
//! - [`harness`] — scenario configs, the simulated-clock run loop, reports
//! - [`net`] — the loopback TCP transport for the networked run mode

pub mod dataspace;
pub mod frost;
pub mod gateway;
pub mod geo;
pub mod harness;
pub mod net;
pub mod provider;
pub mod rng;
pub mod sensorsim;
pub mod wire;

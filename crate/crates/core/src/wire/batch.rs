//! Gateway→provider ingestion batch.

use serde::{Deserialize, Serialize};

use super::frame::UplinkFrame;

/// One decoded uplink frame with the gateway's link annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub frame: UplinkFrame,
    /// Simulated received signal strength.
    pub rssi_dbm: i16,
}

/// A batch of accepted frames forwarded on the backhaul link. Travels as the
/// body of an `INGEST_BATCH` envelope.
///
/// `received_at_s` may lag or lead the frame timestamps (clock skew between
/// the sensor fleet and the gateway is allowed); the annotations correspond
/// 1:1 with the frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionBatch {
    pub gateway_id: String,
    pub received_at_s: u64,
    pub frames: Vec<AnnotatedFrame>,
}

impl IngestionBatch {
    pub fn is_well_formed(&self) -> bool {
        !self.frames.is_empty()
    }
}

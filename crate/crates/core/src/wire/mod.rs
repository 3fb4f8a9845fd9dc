//! Byte-exact wire formats: the 26-byte sensor uplink frame, the signed
//! message envelope used for every service interaction, and the
//! length-prefixed stream framing that carries envelopes.
//!
//! Everything in this module is a pure codec; all functions are safe to call
//! concurrently.

mod batch;
mod envelope;
mod frame;
mod framing;

pub use batch::{AnnotatedFrame, IngestionBatch};
pub use envelope::{
    canonical_json, hmac_sha256_hex, sign_envelope, verify_envelope, Envelope, MsgType,
};
pub use frame::{
    crc16_ccitt_false, decode_frame, encode_frame, FrameError, UplinkFrame, FRAME_LEN,
    FRAME_VERSION,
};
pub use framing::{read_envelope, write_envelope, FramingError, MAX_MESSAGE_LEN};

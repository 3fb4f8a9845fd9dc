//! Length-prefixed envelope framing over byte streams.
//!
//! One message = a 32-bit big-endian payload length followed by the
//! envelope's canonical wire bytes (UTF-8 JSON, sorted keys, signature
//! included).

use std::io::{self, Read, Write};

use thiserror::Error;

use super::envelope::Envelope;

/// Upper bound on a single framed message; protects readers from hostile
/// length headers.
pub const MAX_MESSAGE_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FramingError {
    #[error("stream error: {0}")]
    Io(#[from] io::Error),
    #[error("declared message length {0} exceeds the {MAX_MESSAGE_LEN}-byte cap")]
    TooLarge(usize),
    #[error("message is not a valid envelope: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// Writes one framed envelope and flushes.
pub fn write_envelope<W: Write>(writer: &mut W, envelope: &Envelope) -> io::Result<()> {
    let payload = envelope.canonical_wire_bytes();
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::other("envelope exceeds u32 length"))?;
    writer.write_all(&len.to_be_bytes())?;
    writer.write_all(&payload)?;
    writer.flush()
}

/// Reads one framed envelope, blocking until a full message arrives.
pub fn read_envelope<R: Read>(reader: &mut R) -> Result<Envelope, FramingError> {
    let mut header = [0u8; 4];
    reader.read_exact(&mut header)?;
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_MESSAGE_LEN {
        return Err(FramingError::TooLarge(len));
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    Ok(serde_json::from_slice(&payload)?)
}

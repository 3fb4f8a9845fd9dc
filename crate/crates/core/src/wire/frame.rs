//! Sensor uplink frame codec.
//!
//! Layout, all multi-byte fields big-endian, 26 bytes total:
//!
//! ```text
//! offset  0       version           u8   (must be 1)
//! offset  1..9    device_id         u64
//! offset  9..13   frame_counter     u32  (monotone per device)
//! offset 13..21   timestamp_s       u64  (Unix seconds)
//! offset 21..23   temperature_cdeg  i16  (centi-degrees Celsius)
//! offset 23       battery_pct       u8   (0..=100)
//! offset 24..26   crc               u16  (CRC-16/CCITT-FALSE over bytes 0..24)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact encoded frame length in bytes.
pub const FRAME_LEN: usize = 26;

/// The only frame version this codec accepts.
pub const FRAME_VERSION: u8 = 1;

/// Decoded contents of a sensor uplink frame. The CRC is computed on encode
/// and checked on decode; it is not carried here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UplinkFrame {
    pub version: u8,
    pub device_id: u64,
    pub frame_counter: u32,
    pub timestamp_s: u64,
    pub temperature_cdeg: i16,
    pub battery_pct: u8,
}

impl UplinkFrame {
    /// A version-1 frame with the given payload fields.
    pub fn new(
        device_id: u64,
        frame_counter: u32,
        timestamp_s: u64,
        temperature_cdeg: i16,
        battery_pct: u8,
    ) -> Self {
        Self {
            version: FRAME_VERSION,
            device_id,
            frame_counter,
            timestamp_s,
            temperature_cdeg,
            battery_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("{field} out of range: {value}")]
    Range { field: &'static str, value: i64 },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame CRC mismatch")]
    Corrupt,
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final XOR.
/// Check value for ASCII "123456789" is 0x29B1.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= u16::from(byte) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

/// Encodes a frame to its 26-byte wire form, computing the CRC.
pub fn encode_frame(frame: &UplinkFrame) -> Result<[u8; FRAME_LEN], FrameError> {
    if frame.version != FRAME_VERSION {
        return Err(FrameError::Range {
            field: "version",
            value: i64::from(frame.version),
        });
    }
    if frame.battery_pct > 100 {
        return Err(FrameError::Range {
            field: "battery_pct",
            value: i64::from(frame.battery_pct),
        });
    }

    let mut buf = [0u8; FRAME_LEN];
    buf[0] = frame.version;
    buf[1..9].copy_from_slice(&frame.device_id.to_be_bytes());
    buf[9..13].copy_from_slice(&frame.frame_counter.to_be_bytes());
    buf[13..21].copy_from_slice(&frame.timestamp_s.to_be_bytes());
    buf[21..23].copy_from_slice(&frame.temperature_cdeg.to_be_bytes());
    buf[23] = frame.battery_pct;
    let crc = crc16_ccitt_false(&buf[..24]);
    buf[24..26].copy_from_slice(&crc.to_be_bytes());
    Ok(buf)
}

/// Decodes and validates a 26-byte buffer.
///
/// Rejection order: length, CRC, version, battery range. Any single-bit
/// corruption of a valid frame fails the CRC and reports `Corrupt`.
pub fn decode_frame(buf: &[u8]) -> Result<UplinkFrame, FrameError> {
    if buf.len() != FRAME_LEN {
        return Err(FrameError::Malformed(format!(
            "length {} != {FRAME_LEN}",
            buf.len()
        )));
    }
    let stored_crc = u16::from_be_bytes([buf[24], buf[25]]);
    if crc16_ccitt_false(&buf[..24]) != stored_crc {
        return Err(FrameError::Corrupt);
    }
    let version = buf[0];
    if version != FRAME_VERSION {
        return Err(FrameError::Malformed(format!("version {version} != 1")));
    }
    let battery_pct = buf[23];
    if battery_pct > 100 {
        return Err(FrameError::Malformed(format!(
            "battery_pct {battery_pct} > 100"
        )));
    }
    Ok(UplinkFrame {
        version,
        device_id: u64::from_be_bytes(buf[1..9].try_into().expect("8 bytes")),
        frame_counter: u32::from_be_bytes(buf[9..13].try_into().expect("4 bytes")),
        timestamp_s: u64::from_be_bytes(buf[13..21].try_into().expect("8 bytes")),
        temperature_cdeg: i16::from_be_bytes([buf[21], buf[22]]),
        battery_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crc_self_test_vector() {
        // Reference check value for this CRC parameterization, confirmed
        // against an independent implementation before this codec was built.
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
    }

    #[test]
    fn roundtrip_simple_frame() {
        let frame = UplinkFrame::new(7, 1, 0, 0, 100);
        let bytes = encode_frame(&frame).unwrap();
        assert_eq!(bytes.len(), FRAME_LEN);
        assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    #[test]
    fn negative_temperature_encoding() {
        // -5.25 °C = -525 centi-degrees; two's complement of 525 (0x020D)
        // is 0xFDF3, confirmed by hand before this codec was built.
        let frame = UplinkFrame::new(1, 1, 0, -525, 50);
        let bytes = encode_frame(&frame).unwrap();
        assert_eq!(bytes[21], 0xFD);
        assert_eq!(bytes[22], 0xF3);
    }

    #[test]
    fn encode_rejects_out_of_range_fields() {
        let mut frame = UplinkFrame::new(1, 1, 0, 0, 101);
        assert_eq!(
            encode_frame(&frame),
            Err(FrameError::Range {
                field: "battery_pct",
                value: 101
            })
        );
        frame.battery_pct = 100;
        frame.version = 2;
        assert_eq!(
            encode_frame(&frame),
            Err(FrameError::Range {
                field: "version",
                value: 2
            })
        );
    }

    #[test]
    fn decode_rejects_wrong_length() {
        assert!(matches!(
            decode_frame(&[0u8; 25]),
            Err(FrameError::Malformed(_))
        ));
        assert!(matches!(
            decode_frame(&[0u8; 27]),
            Err(FrameError::Malformed(_))
        ));
    }

    #[test]
    fn decode_rejects_crc_corruption() {
        let mut bytes = encode_frame(&UplinkFrame::new(7, 3, 1000, 251, 90)).unwrap();
        bytes[25] ^= 0x01;
        assert_eq!(decode_frame(&bytes), Err(FrameError::Corrupt));
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let bytes = encode_frame(&UplinkFrame::new(42, 9, 1234567, -100, 77)).unwrap();
        for byte in 0..FRAME_LEN {
            for bit in 0..8 {
                let mut corrupted = bytes;
                corrupted[byte] ^= 1 << bit;
                assert!(
                    decode_frame(&corrupted).is_err(),
                    "flip of byte {byte} bit {bit} was accepted"
                );
            }
        }
    }

    #[test]
    fn every_single_byte_mutation_is_rejected() {
        // a payload byte change breaks the CRC; a CRC byte change no longer
        // matches the payload
        let bytes = encode_frame(&UplinkFrame::new(3, 17, 999_999, -42, 60)).unwrap();
        let mut state = 0xABCDu64;
        for byte in 0..FRAME_LEN {
            for _ in 0..8 {
                let new_value = (crate::rng::splitmix64(&mut state) & 0xFF) as u8;
                if new_value == bytes[byte] {
                    continue;
                }
                let mut corrupted = bytes;
                corrupted[byte] = new_value;
                assert!(
                    decode_frame(&corrupted).is_err(),
                    "byte {byte} set to {new_value:#04x} was accepted"
                );
            }
        }
    }

    #[test]
    fn crafted_frame_with_valid_crc_but_bad_version_is_malformed() {
        let mut buf = encode_frame(&UplinkFrame::new(1, 1, 0, 0, 10)).unwrap();
        buf[0] = 9;
        let crc = crc16_ccitt_false(&buf[..24]);
        buf[24..26].copy_from_slice(&crc.to_be_bytes());
        assert!(matches!(decode_frame(&buf), Err(FrameError::Malformed(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_any_valid_frame(
            device_id in any::<u64>(),
            frame_counter in any::<u32>(),
            timestamp_s in any::<u64>(),
            temperature_cdeg in any::<i16>(),
            battery_pct in 0u8..=100,
        ) {
            let frame = UplinkFrame::new(
                device_id, frame_counter, timestamp_s, temperature_cdeg, battery_pct,
            );
            let bytes = encode_frame(&frame).unwrap();
            prop_assert_eq!(decode_frame(&bytes).unwrap(), frame);
        }
    }
}

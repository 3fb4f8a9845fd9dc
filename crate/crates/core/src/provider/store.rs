//! Append-only binary persistence for the provider.
//!
//! A store directory holds:
//!
//! ```text
//! registrations.log          sensor registrations      magic OVCR
//! quarantine.log             readings w/o registration magic OVCQ
//! datasets/<dataset_id>.log  enriched sensor records   magic OVCD
//! ```
//!
//! Every file starts with a 4-byte magic and a big-endian u32 format
//! version, followed by fixed-width records (layouts below). The in-memory
//! index is rebuilt on open by a full scan. A store may also run purely in
//! memory (no directory), which the scenario harness and the browser demo
//! use.
//!
//! Record layouts, all fields big-endian, strings UTF-8 NUL-padded to 32
//! bytes:
//!
//! ```text
//! dataset record (88 bytes):
//!   device_id u64 | frame_counter u32 | timestamp_s u64 |
//!   temperature_cdeg i16 | lat f64 | lon f64 | elevation_m f64 |
//!   rssi_dbm i16 | ingest_seq u64 | gateway_id [u8; 32]
//! quarantine record (56 bytes):
//!   device_id u64 | frame_counter u32 | timestamp_s u64 |
//!   temperature_cdeg i16 | rssi_dbm i16 | gateway_id [u8; 32]
//! registration record (96 bytes):
//!   device_id u64 | lat f64 | lon f64 | elevation_m f64 |
//!   label [u8; 32] | field_id [u8; 32]
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{QuarantinedReading, SensorRecord, SensorRegistration};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC_DATASET: [u8; 4] = *b"OVCD";
pub const MAGIC_QUARANTINE: [u8; 4] = *b"OVCQ";
pub const MAGIC_REGISTRY: [u8; 4] = *b"OVCR";

const HEADER_LEN: usize = 8;
const DATASET_RECORD_LEN: usize = 88;
const QUARANTINE_RECORD_LEN: usize = 56;
const REGISTRATION_RECORD_LEN: usize = 96;
const FIXED_STR_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{file}: bad magic")]
    BadMagic { file: String },
    #[error("{file}: unsupported format version {version}")]
    UnsupportedVersion { file: String, version: u32 },
    #[error("{file}: corrupt store file: {reason}")]
    Corrupt { file: String, reason: String },
    #[error("string field {field} exceeds {FIXED_STR_LEN} bytes")]
    StringTooLong { field: &'static str },
}

/// File-backed (or memory-only) persistence handle.
#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
}

/// Everything a startup scan recovers.
#[derive(Debug, Default)]
pub struct LoadedState {
    pub registrations: Vec<SensorRegistration>,
    pub dataset_records: BTreeMap<String, Vec<SensorRecord>>,
    pub quarantine: Vec<QuarantinedReading>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self { dir: None }
    }

    pub fn is_persistent(&self) -> bool {
        self.dir.is_some()
    }

    /// Opens (creating if needed) a store directory and scans all logs.
    pub fn open(dir: &Path) -> Result<(Self, LoadedState), StoreError> {
        fs::create_dir_all(dir.join("datasets"))?;
        let store = Self {
            dir: Some(dir.to_path_buf()),
        };
        let mut state = LoadedState::default();

        let reg_path = dir.join("registrations.log");
        if reg_path.exists() {
            let body = read_body(&reg_path, MAGIC_REGISTRY)?;
            state.registrations = split_records(&reg_path, &body, REGISTRATION_RECORD_LEN)?
                .iter()
                .map(|chunk| decode_registration(chunk))
                .collect::<Result<_, _>>()?;
        }

        let quarantine_path = dir.join("quarantine.log");
        if quarantine_path.exists() {
            let body = read_body(&quarantine_path, MAGIC_QUARANTINE)?;
            state.quarantine = split_records(&quarantine_path, &body, QUARANTINE_RECORD_LEN)?
                .iter()
                .map(|chunk| decode_quarantine(chunk))
                .collect::<Result<_, _>>()?;
        }

        let mut dataset_files: Vec<PathBuf> = fs::read_dir(dir.join("datasets"))?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "log"))
            .collect();
        dataset_files.sort();
        for path in dataset_files {
            let dataset_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| StoreError::Corrupt {
                    file: path.display().to_string(),
                    reason: "dataset file name is not UTF-8".into(),
                })?
                .to_string();
            let body = read_body(&path, MAGIC_DATASET)?;
            let records = split_records(&path, &body, DATASET_RECORD_LEN)?
                .iter()
                .map(|chunk| decode_record(chunk))
                .collect::<Result<Vec<_>, _>>()?;
            state.dataset_records.insert(dataset_id, records);
        }

        Ok((store, state))
    }

    pub fn append_records(
        &mut self,
        dataset_id: &str,
        records: &[SensorRecord],
    ) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        if records.is_empty() {
            return Ok(());
        }
        let path = dir.join("datasets").join(format!("{dataset_id}.log"));
        let mut payload = Vec::with_capacity(records.len() * DATASET_RECORD_LEN);
        for record in records {
            payload.extend_from_slice(&encode_record(record)?);
        }
        append(&path, MAGIC_DATASET, &payload)
    }

    pub fn append_quarantine(&mut self, readings: &[QuarantinedReading]) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        if readings.is_empty() {
            return Ok(());
        }
        let path = dir.join("quarantine.log");
        let mut payload = Vec::with_capacity(readings.len() * QUARANTINE_RECORD_LEN);
        for reading in readings {
            payload.extend_from_slice(&encode_quarantine(reading)?);
        }
        append(&path, MAGIC_QUARANTINE, &payload)
    }

    /// Rewrites the quarantine log with the surviving entries. Called by the
    /// explicit reconcile admin command, the one mutation that is not an
    /// append.
    pub fn rewrite_quarantine(
        &mut self,
        readings: &[QuarantinedReading],
    ) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join("quarantine.log");
        let mut payload = Vec::with_capacity(readings.len() * QUARANTINE_RECORD_LEN);
        for reading in readings {
            payload.extend_from_slice(&encode_quarantine(reading)?);
        }
        let mut file = File::create(&path)?;
        file.write_all(&MAGIC_QUARANTINE)?;
        file.write_all(&FORMAT_VERSION.to_be_bytes())?;
        file.write_all(&payload)?;
        Ok(())
    }

    pub fn append_registration(
        &mut self,
        registration: &SensorRegistration,
    ) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join("registrations.log");
        append(&path, MAGIC_REGISTRY, &encode_registration(registration)?)
    }
}

/// Appends payload, creating the file with its header on first write.
fn append(path: &Path, magic: [u8; 4], payload: &[u8]) -> Result<(), StoreError> {
    let fresh = !path.exists();
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        file.write_all(&magic)?;
        file.write_all(&FORMAT_VERSION.to_be_bytes())?;
    }
    file.write_all(payload)?;
    Ok(())
}

fn read_body(path: &Path, magic: [u8; 4]) -> Result<Vec<u8>, StoreError> {
    let mut file = File::open(path)?;
    let mut contents = Vec::new();
    file.read_to_end(&mut contents)?;
    let file_name = path.display().to_string();
    if contents.len() < HEADER_LEN || contents[..4] != magic {
        return Err(StoreError::BadMagic { file: file_name });
    }
    let version = u32::from_be_bytes(contents[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion {
            file: file_name,
            version,
        });
    }
    Ok(contents[HEADER_LEN..].to_vec())
}

fn split_records<'a>(
    path: &Path,
    body: &'a [u8],
    record_len: usize,
) -> Result<Vec<&'a [u8]>, StoreError> {
    if !body.len().is_multiple_of(record_len) {
        return Err(StoreError::Corrupt {
            file: path.display().to_string(),
            reason: format!(
                "body length {} is not a multiple of the {record_len}-byte record",
                body.len()
            ),
        });
    }
    Ok(body.chunks_exact(record_len).collect())
}

fn put_fixed_str(buf: &mut Vec<u8>, s: &str, field: &'static str) -> Result<(), StoreError> {
    let bytes = s.as_bytes();
    if bytes.len() > FIXED_STR_LEN {
        return Err(StoreError::StringTooLong { field });
    }
    buf.extend_from_slice(bytes);
    buf.resize(buf.len() + (FIXED_STR_LEN - bytes.len()), 0);
    Ok(())
}

fn get_fixed_str(chunk: &[u8]) -> String {
    let end = chunk.iter().position(|&b| b == 0).unwrap_or(chunk.len());
    String::from_utf8_lossy(&chunk[..end]).into_owned()
}

fn encode_record(r: &SensorRecord) -> Result<Vec<u8>, StoreError> {
    let mut buf = Vec::with_capacity(DATASET_RECORD_LEN);
    buf.extend_from_slice(&r.device_id.to_be_bytes());
    buf.extend_from_slice(&r.frame_counter.to_be_bytes());
    buf.extend_from_slice(&r.timestamp_s.to_be_bytes());
    buf.extend_from_slice(&r.temperature_cdeg.to_be_bytes());
    buf.extend_from_slice(&r.lat.to_bits().to_be_bytes());
    buf.extend_from_slice(&r.lon.to_bits().to_be_bytes());
    buf.extend_from_slice(&r.elevation_m.to_bits().to_be_bytes());
    buf.extend_from_slice(&r.rssi_dbm.to_be_bytes());
    buf.extend_from_slice(&r.ingest_seq.to_be_bytes());
    put_fixed_str(&mut buf, &r.gateway_id, "gateway_id")?;
    debug_assert_eq!(buf.len(), DATASET_RECORD_LEN);
    Ok(buf)
}

fn decode_record(chunk: &[u8]) -> Result<SensorRecord, StoreError> {
    Ok(SensorRecord {
        device_id: u64::from_be_bytes(chunk[0..8].try_into().expect("8")),
        frame_counter: u32::from_be_bytes(chunk[8..12].try_into().expect("4")),
        timestamp_s: u64::from_be_bytes(chunk[12..20].try_into().expect("8")),
        temperature_cdeg: i16::from_be_bytes(chunk[20..22].try_into().expect("2")),
        lat: f64::from_bits(u64::from_be_bytes(chunk[22..30].try_into().expect("8"))),
        lon: f64::from_bits(u64::from_be_bytes(chunk[30..38].try_into().expect("8"))),
        elevation_m: f64::from_bits(u64::from_be_bytes(chunk[38..46].try_into().expect("8"))),
        rssi_dbm: i16::from_be_bytes(chunk[46..48].try_into().expect("2")),
        ingest_seq: u64::from_be_bytes(chunk[48..56].try_into().expect("8")),
        gateway_id: get_fixed_str(&chunk[56..88]),
    })
}

fn encode_quarantine(r: &QuarantinedReading) -> Result<Vec<u8>, StoreError> {
    let mut buf = Vec::with_capacity(QUARANTINE_RECORD_LEN);
    buf.extend_from_slice(&r.device_id.to_be_bytes());
    buf.extend_from_slice(&r.frame_counter.to_be_bytes());
    buf.extend_from_slice(&r.timestamp_s.to_be_bytes());
    buf.extend_from_slice(&r.temperature_cdeg.to_be_bytes());
    buf.extend_from_slice(&r.rssi_dbm.to_be_bytes());
    put_fixed_str(&mut buf, &r.gateway_id, "gateway_id")?;
    debug_assert_eq!(buf.len(), QUARANTINE_RECORD_LEN);
    Ok(buf)
}

fn decode_quarantine(chunk: &[u8]) -> Result<QuarantinedReading, StoreError> {
    Ok(QuarantinedReading {
        device_id: u64::from_be_bytes(chunk[0..8].try_into().expect("8")),
        frame_counter: u32::from_be_bytes(chunk[8..12].try_into().expect("4")),
        timestamp_s: u64::from_be_bytes(chunk[12..20].try_into().expect("8")),
        temperature_cdeg: i16::from_be_bytes(chunk[20..22].try_into().expect("2")),
        rssi_dbm: i16::from_be_bytes(chunk[22..24].try_into().expect("2")),
        gateway_id: get_fixed_str(&chunk[24..56]),
    })
}

fn encode_registration(r: &SensorRegistration) -> Result<Vec<u8>, StoreError> {
    let mut buf = Vec::with_capacity(REGISTRATION_RECORD_LEN);
    buf.extend_from_slice(&r.device_id.to_be_bytes());
    buf.extend_from_slice(&r.lat.to_bits().to_be_bytes());
    buf.extend_from_slice(&r.lon.to_bits().to_be_bytes());
    buf.extend_from_slice(&r.elevation_m.to_bits().to_be_bytes());
    put_fixed_str(&mut buf, &r.label, "label")?;
    put_fixed_str(&mut buf, &r.field_id, "field_id")?;
    debug_assert_eq!(buf.len(), REGISTRATION_RECORD_LEN);
    Ok(buf)
}

fn decode_registration(chunk: &[u8]) -> Result<SensorRegistration, StoreError> {
    Ok(SensorRegistration {
        device_id: u64::from_be_bytes(chunk[0..8].try_into().expect("8")),
        lat: f64::from_bits(u64::from_be_bytes(chunk[8..16].try_into().expect("8"))),
        lon: f64::from_bits(u64::from_be_bytes(chunk[16..24].try_into().expect("8"))),
        elevation_m: f64::from_bits(u64::from_be_bytes(chunk[24..32].try_into().expect("8"))),
        label: get_fixed_str(&chunk[32..64]),
        field_id: get_fixed_str(&chunk[64..96]),
    })
}

//! The data-providing service: ingests gateway batches, enriches each
//! reading with the registered sensor's GPS coordinates, persists records,
//! and describes datasets for the catalog.
//!
//! Datasets are partitioned one-per-field: registering a sensor under
//! `field_id` assigns its readings to dataset `ds-<field_id>`. Record
//! identity for deduplication is `(device_id, frame_counter)`; timestamps
//! are informational. Readings from unregistered devices are quarantined to
//! a separate log and only move into a dataset through the explicit
//! reconcile admin command.

mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::IngestionBatch;

pub use store::{
    LoadedState, Store, StoreError, FORMAT_VERSION, MAGIC_DATASET, MAGIC_QUARANTINE, MAGIC_REGISTRY,
};

/// Longest label/field/gateway identifier the fixed-width store rows accept.
pub const MAX_NAME_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRegistration {
    pub device_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
    pub label: String,
    pub field_id: String,
}

/// An enriched, persisted reading. `temperature_cdeg` keeps the sensor's
/// exact centi-degree quantization; use [`SensorRecord::temperature_c`] for
/// degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub device_id: u64,
    pub frame_counter: u32,
    pub timestamp_s: u64,
    pub temperature_cdeg: i16,
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
    pub rssi_dbm: i16,
    /// Monotone sequence number assigned at persistence.
    pub ingest_seq: u64,
    pub gateway_id: String,
}

impl SensorRecord {
    pub fn temperature_c(&self) -> f64 {
        f64::from(self.temperature_cdeg) / 100.0
    }
}

/// A reading held back because its device was not registered at ingest time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedReading {
    pub device_id: u64,
    pub frame_counter: u32,
    pub timestamp_s: u64,
    pub temperature_cdeg: i16,
    pub rssi_dbm: i16,
    pub gateway_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub dataset_id: String,
    pub field_id: String,
    pub description: String,
    /// `[min_ts, max_ts]` over stored records; `None` while empty.
    pub coverage: Option<(u64, u64)>,
    pub record_count: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub stored: u64,
    pub quarantined: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReconcileSummary {
    pub moved: u64,
    pub remaining: u64,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid coordinates ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("device {0} already registered with different data")]
    DuplicateDevice(u64),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("invalid query window: {a} > {b}")]
    InvalidWindow { a: u64, b: u64 },
    #[error("malformed batch: {0}")]
    MalformedBatch(String),
    #[error("{field} must be 1..={MAX_NAME_LEN} chars of [A-Za-z0-9_-], got {value:?}")]
    BadName { field: &'static str, value: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The dataset a field's sensors feed.
pub fn dataset_id_for_field(field_id: &str) -> String {
    format!("ds-{field_id}")
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= MAX_NAME_LEN
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug)]
struct Dataset {
    field_id: String,
    records: Vec<SensorRecord>,
}

#[derive(Debug)]
pub struct Provider {
    store: Store,
    registrations: BTreeMap<u64, SensorRegistration>,
    datasets: BTreeMap<String, Dataset>,
    quarantine: Vec<QuarantinedReading>,
    /// Every `(device_id, frame_counter)` identity ever ingested, stored or
    /// quarantined.
    seen: BTreeSet<(u64, u32)>,
    next_ingest_seq: u64,
}

impl Provider {
    pub fn in_memory() -> Self {
        Self::from_parts(Store::in_memory(), LoadedState::default())
    }

    /// Opens a persistent store, rebuilding the index by full scan.
    pub fn open(dir: &Path) -> Result<Self, ProviderError> {
        let (store, state) = Store::open(dir)?;
        Ok(Self::from_parts(store, state))
    }

    fn from_parts(store: Store, state: LoadedState) -> Self {
        let mut provider = Self {
            store,
            registrations: BTreeMap::new(),
            datasets: BTreeMap::new(),
            quarantine: Vec::new(),
            seen: BTreeSet::new(),
            next_ingest_seq: 0,
        };
        for registration in state.registrations {
            // last registration wins during replay; ensures the dataset exists
            provider.ensure_dataset(&registration.field_id);
            provider
                .registrations
                .insert(registration.device_id, registration);
        }
        for (dataset_id, records) in state.dataset_records {
            let field_id = dataset_id
                .strip_prefix("ds-")
                .unwrap_or(&dataset_id)
                .to_string();
            let entry = provider
                .datasets
                .entry(dataset_id)
                .or_insert_with(|| Dataset {
                    field_id,
                    records: Vec::new(),
                });
            for record in records {
                provider
                    .seen
                    .insert((record.device_id, record.frame_counter));
                provider.next_ingest_seq = provider.next_ingest_seq.max(record.ingest_seq + 1);
                entry.records.push(record);
            }
        }
        for reading in state.quarantine {
            provider
                .seen
                .insert((reading.device_id, reading.frame_counter));
            provider.quarantine.push(reading);
        }
        provider
    }

    fn ensure_dataset(&mut self, field_id: &str) {
        let dataset_id = dataset_id_for_field(field_id);
        self.datasets.entry(dataset_id).or_insert_with(|| Dataset {
            field_id: field_id.to_string(),
            records: Vec::new(),
        });
    }

    /// Registers a sensor; re-registration with identical data is an
    /// idempotent success.
    pub fn register_sensor(&mut self, reg: SensorRegistration) -> Result<(), ProviderError> {
        if !(crate::geo::LatLon::new(reg.lat, reg.lon)).is_valid() {
            return Err(ProviderError::InvalidCoordinates {
                lat: reg.lat,
                lon: reg.lon,
            });
        }
        if !valid_name(&reg.label) {
            return Err(ProviderError::BadName {
                field: "label",
                value: reg.label,
            });
        }
        if !valid_name(&reg.field_id) {
            return Err(ProviderError::BadName {
                field: "field_id",
                value: reg.field_id,
            });
        }
        if let Some(existing) = self.registrations.get(&reg.device_id) {
            if *existing == reg {
                return Ok(());
            }
            return Err(ProviderError::DuplicateDevice(reg.device_id));
        }
        self.store.append_registration(&reg)?;
        self.ensure_dataset(&reg.field_id);
        self.registrations.insert(reg.device_id, reg);
        Ok(())
    }

    pub fn registration(&self, device_id: u64) -> Option<&SensorRegistration> {
        self.registrations.get(&device_id)
    }

    pub fn registration_count(&self) -> usize {
        self.registrations.len()
    }

    pub fn quarantine_len(&self) -> usize {
        self.quarantine.len()
    }

    pub fn dataset_exists(&self, dataset_id: &str) -> bool {
        self.datasets.contains_key(dataset_id)
    }

    /// Ingests one batch. Each frame becomes an enriched record unless its
    /// identity was already seen (duplicate) or its device is unregistered
    /// (quarantined). Persistence is atomic per batch: files are written
    /// after the whole batch is processed.
    pub fn ingest(&mut self, batch: &IngestionBatch) -> Result<IngestSummary, ProviderError> {
        if !batch.is_well_formed() {
            return Err(ProviderError::MalformedBatch("empty frame list".into()));
        }
        if !valid_name(&batch.gateway_id) {
            return Err(ProviderError::MalformedBatch(format!(
                "bad gateway_id {:?}",
                batch.gateway_id
            )));
        }

        let mut summary = IngestSummary::default();
        let mut new_by_dataset: BTreeMap<String, Vec<SensorRecord>> = BTreeMap::new();
        let mut new_quarantine: Vec<QuarantinedReading> = Vec::new();

        for annotated in &batch.frames {
            let frame = &annotated.frame;
            let identity = (frame.device_id, frame.frame_counter);
            if self.seen.contains(&identity)
                || new_by_dataset
                    .values()
                    .flatten()
                    .any(|r| (r.device_id, r.frame_counter) == identity)
                || new_quarantine
                    .iter()
                    .any(|q| (q.device_id, q.frame_counter) == identity)
            {
                summary.duplicates += 1;
                continue;
            }
            match self.registrations.get(&frame.device_id) {
                Some(reg) => {
                    let record = SensorRecord {
                        device_id: frame.device_id,
                        frame_counter: frame.frame_counter,
                        timestamp_s: frame.timestamp_s,
                        temperature_cdeg: frame.temperature_cdeg,
                        lat: reg.lat,
                        lon: reg.lon,
                        elevation_m: reg.elevation_m,
                        rssi_dbm: annotated.rssi_dbm,
                        ingest_seq: self.next_ingest_seq + summary.stored,
                        gateway_id: batch.gateway_id.clone(),
                    };
                    summary.stored += 1;
                    new_by_dataset
                        .entry(dataset_id_for_field(&reg.field_id))
                        .or_default()
                        .push(record);
                }
                None => {
                    summary.quarantined += 1;
                    new_quarantine.push(QuarantinedReading {
                        device_id: frame.device_id,
                        frame_counter: frame.frame_counter,
                        timestamp_s: frame.timestamp_s,
                        temperature_cdeg: frame.temperature_cdeg,
                        rssi_dbm: annotated.rssi_dbm,
                        gateway_id: batch.gateway_id.clone(),
                    });
                }
            }
        }

        for (dataset_id, records) in &new_by_dataset {
            self.store.append_records(dataset_id, records)?;
        }
        self.store.append_quarantine(&new_quarantine)?;

        for (dataset_id, records) in new_by_dataset {
            for record in records {
                self.seen.insert((record.device_id, record.frame_counter));
                self.datasets
                    .get_mut(&dataset_id)
                    .expect("dataset created at registration")
                    .records
                    .push(record);
            }
        }
        for reading in new_quarantine {
            self.seen.insert((reading.device_id, reading.frame_counter));
            self.quarantine.push(reading);
        }
        self.next_ingest_seq += summary.stored;
        Ok(summary)
    }

    /// All records of a dataset with `timestamp_s ∈ [a, b]` (inclusive),
    /// ordered by `(timestamp_s, device_id)`. Pure read.
    pub fn query_records(
        &self,
        dataset_id: &str,
        a: u64,
        b: u64,
        device_filter: Option<u64>,
    ) -> Result<Vec<SensorRecord>, ProviderError> {
        if a > b {
            return Err(ProviderError::InvalidWindow { a, b });
        }
        let dataset = self
            .datasets
            .get(dataset_id)
            .ok_or_else(|| ProviderError::UnknownDataset(dataset_id.to_string()))?;
        let mut result: Vec<SensorRecord> = dataset
            .records
            .iter()
            .filter(|r| r.timestamp_s >= a && r.timestamp_s <= b)
            .filter(|r| device_filter.is_none_or(|d| r.device_id == d))
            .cloned()
            .collect();
        result.sort_by_key(|r| (r.timestamp_s, r.device_id, r.frame_counter, r.ingest_seq));
        Ok(result)
    }

    /// Current catalog view; coverage reflects stored records exactly at
    /// query time.
    pub fn descriptors(&self) -> Vec<DatasetDescriptor> {
        self.datasets
            .iter()
            .map(|(dataset_id, dataset)| {
                let min = dataset.records.iter().map(|r| r.timestamp_s).min();
                let max = dataset.records.iter().map(|r| r.timestamp_s).max();
                DatasetDescriptor {
                    dataset_id: dataset_id.clone(),
                    field_id: dataset.field_id.clone(),
                    description: format!("temperature readings for field {}", dataset.field_id),
                    coverage: min.zip(max),
                    record_count: dataset.records.len() as u64,
                }
            })
            .collect()
    }

    pub fn descriptor(&self, dataset_id: &str) -> Option<DatasetDescriptor> {
        self.descriptors()
            .into_iter()
            .find(|d| d.dataset_id == dataset_id)
    }

    /// Moves quarantined readings whose devices are now registered into
    /// their datasets. Explicit admin operation; never runs automatically.
    pub fn reconcile_quarantine(&mut self) -> Result<ReconcileSummary, ProviderError> {
        let mut moved: Vec<(String, SensorRecord)> = Vec::new();
        let mut remaining: Vec<QuarantinedReading> = Vec::new();
        let mut seq = self.next_ingest_seq;
        for reading in std::mem::take(&mut self.quarantine) {
            match self.registrations.get(&reading.device_id) {
                Some(reg) => {
                    moved.push((
                        dataset_id_for_field(&reg.field_id),
                        SensorRecord {
                            device_id: reading.device_id,
                            frame_counter: reading.frame_counter,
                            timestamp_s: reading.timestamp_s,
                            temperature_cdeg: reading.temperature_cdeg,
                            lat: reg.lat,
                            lon: reg.lon,
                            elevation_m: reg.elevation_m,
                            rssi_dbm: reading.rssi_dbm,
                            ingest_seq: seq,
                            gateway_id: reading.gateway_id.clone(),
                        },
                    ));
                    seq += 1;
                }
                None => remaining.push(reading),
            }
        }

        let mut by_dataset: BTreeMap<String, Vec<SensorRecord>> = BTreeMap::new();
        for (dataset_id, record) in moved {
            by_dataset.entry(dataset_id).or_default().push(record);
        }
        let mut moved_count = 0u64;
        for (dataset_id, records) in &by_dataset {
            self.store.append_records(dataset_id, records)?;
            moved_count += records.len() as u64;
        }
        self.store.rewrite_quarantine(&remaining)?;

        for (dataset_id, records) in by_dataset {
            self.datasets
                .get_mut(&dataset_id)
                .expect("dataset created at registration")
                .records
                .extend(records);
        }
        let summary = ReconcileSummary {
            moved: moved_count,
            remaining: remaining.len() as u64,
        };
        self.quarantine = remaining;
        self.next_ingest_seq = seq;
        Ok(summary)
    }
}

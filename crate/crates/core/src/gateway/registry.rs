//! Device records and the on-disk registry of known devices.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::DeviceConfig;
use crate::protocol::TelemetryPayload;

use super::alerts::AlertState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatestTelemetry {
    pub timestamp_ms: u64,
    pub frame_seq: u32,
    #[serde(flatten)]
    pub payload: TelemetryPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: u32,
    pub first_seen_ms: u64,
    pub last_telemetry: Option<LatestTelemetry>,
    pub last_seq: Option<u32>,
    /// Gateway clock at the last accepted frame.
    pub last_rx_ms: Option<u64>,
    /// Gateway-side mirror of the device configuration.
    pub config: DeviceConfig,
    #[serde(skip)]
    pub alert: AlertState,
}

impl DeviceRecord {
    pub fn new(config: DeviceConfig, first_seen_ms: u64) -> Self {
        Self {
            device_id: config.device_id,
            first_seen_ms,
            last_telemetry: None,
            last_seq: None,
            last_rx_ms: None,
            config,
            alert: AlertState::default(),
        }
    }

    /// Heard from within three sample intervals of `now_ms`.
    pub fn online(&self, now_ms: u64) -> bool {
        let window = 3 * u64::from(self.config.sample_interval_s) * 1000;
        self.last_rx_ms
            .is_some_and(|rx| now_ms.saturating_sub(rx) <= window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub device: u32,
    pub first_seen_ms: u64,
    /// Configuration the device was registered with.
    pub config: DeviceConfig,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RegistryFile {
    devices: Vec<RegistryEntry>,
}

/// `registry.json`: first-seen time and initial config of every device.
#[derive(Debug, Default)]
pub struct Registry {
    path: Option<PathBuf>,
    entries: BTreeMap<u32, RegistryEntry>,
}

impl Registry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        let entries = match fs::read(path) {
            Ok(bytes) => {
                let file: RegistryFile = serde_json::from_slice(&bytes)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                file.devices.into_iter().map(|e| (e.device, e)).collect()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn get(&self, device: u32) -> Option<&RegistryEntry> {
        self.entries.get(&device)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    /// Record a new device; the file is rewritten atomically.
    pub fn insert(&mut self, entry: RegistryEntry) -> io::Result<()> {
        let mut next = self.entries.clone();
        next.insert(entry.device, entry);
        if let Some(path) = &self.path {
            let file = RegistryFile {
                devices: next.values().cloned().collect(),
            };
            let mut bytes = serde_json::to_vec_pretty(&file).expect("registry serializes");
            bytes.push(b'\n');
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, &bytes)?;
            fs::rename(&tmp, path)?;
        }
        self.entries = next;
        Ok(())
    }
}

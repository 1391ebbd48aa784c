//! Append-only timeline, one JSON object per line.
//!
//! ```text
//! {"seq":1,"ts":1700000060000,"kind":"telemetry","device":7,"body":{...}}
//! ```

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::protocol::{CommandPayload, TelemetryFlags, TelemetryPayload};

use super::alerts::NotificationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Telemetry,
    Notification,
    Command,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Telemetry => "telemetry",
            Self::Notification => "notification",
            Self::Command => "command",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "telemetry" => Some(Self::Telemetry),
            "notification" => Some(Self::Notification),
            "command" => Some(Self::Command),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryBody {
    pub frame_seq: u32,
    /// Gateway clock at arrival.
    pub rx_ms: u64,
    pub moisture_cpct: u16,
    pub temp_cdegc: i16,
    pub rh_cpct: u16,
    pub battery_mv: u16,
    pub solar_mv: u16,
    pub flags: u8,
}

impl TelemetryBody {
    pub fn new(frame_seq: u32, rx_ms: u64, t: &TelemetryPayload) -> Self {
        Self {
            frame_seq,
            rx_ms,
            moisture_cpct: t.moisture_cpct,
            temp_cdegc: t.temp_cdegc,
            rh_cpct: t.rh_cpct,
            battery_mv: t.battery_mv,
            solar_mv: t.solar_mv,
            flags: t.flags.0,
        }
    }

    pub fn payload(&self) -> TelemetryPayload {
        TelemetryPayload {
            moisture_cpct: self.moisture_cpct,
            temp_cdegc: self.temp_cdegc,
            rh_cpct: self.rh_cpct,
            battery_mv: self.battery_mv,
            solar_mv: self.solar_mv,
            flags: TelemetryFlags(self.flags),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationBody {
    pub kind: NotificationKind,
    pub moisture_cpct: u16,
}

/// Outcome recorded for a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Ok,
    Rejected,
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandBody {
    pub frame_seq: u32,
    pub status: CommandStatus,
    #[serde(flatten)]
    pub command: CommandPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryBody {
    Telemetry(TelemetryBody),
    Notification(NotificationBody),
    Command(CommandBody),
}

impl EntryBody {
    pub fn kind(&self) -> EntryKind {
        match self {
            Self::Telemetry(_) => EntryKind::Telemetry,
            Self::Notification(_) => EntryKind::Notification,
            Self::Command(_) => EntryKind::Command,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineEntry {
    pub seq: u64,
    pub ts: u64,
    pub device: u32,
    pub body: EntryBody,
}

impl TimelineEntry {
    pub fn kind(&self) -> EntryKind {
        self.body.kind()
    }
}

impl Serialize for TimelineEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TimelineEntry", 5)?;
        st.serialize_field("seq", &self.seq)?;
        st.serialize_field("ts", &self.ts)?;
        st.serialize_field("kind", &self.kind())?;
        st.serialize_field("device", &self.device)?;
        match &self.body {
            EntryBody::Telemetry(b) => st.serialize_field("body", b)?,
            EntryBody::Notification(b) => st.serialize_field("body", b)?,
            EntryBody::Command(b) => st.serialize_field("body", b)?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for TimelineEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            seq: u64,
            ts: u64,
            kind: EntryKind,
            device: u32,
            body: serde_json::Value,
        }
        let raw = Raw::deserialize(d)?;
        let body = match raw.kind {
            EntryKind::Telemetry => serde_json::from_value(raw.body).map(EntryBody::Telemetry),
            EntryKind::Notification => {
                serde_json::from_value(raw.body).map(EntryBody::Notification)
            }
            EntryKind::Command => serde_json::from_value(raw.body).map(EntryBody::Command),
        }
        .map_err(D::Error::custom)?;
        Ok(Self {
            seq: raw.seq,
            ts: raw.ts,
            device: raw.device,
            body,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// The timeline, held in memory and optionally mirrored to a file.
#[derive(Debug)]
pub struct TimelineLog {
    file: Option<(PathBuf, File)>,
    fsync: bool,
    entries: Vec<TimelineEntry>,
    by_device: HashMap<u32, Vec<usize>>,
}

impl TimelineLog {
    pub fn in_memory() -> Self {
        Self {
            file: None,
            fsync: false,
            entries: Vec::new(),
            by_device: HashMap::new(),
        }
    }

    /// Open (or create) a log file and load its entries.
    ///
    /// A final line without a newline is the remains of an interrupted
    /// append; it is cut off. Any other malformed line is an error.
    pub fn open(path: &Path, fsync: bool) -> Result<Self, LogError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut log = Self::in_memory();
        log.fsync = fsync;

        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut good_len = 0u64;
        let mut line_no = 0;
        let mut torn_tail = false;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let corrupt = |reason: String| LogError::Corrupt {
                path: path.to_path_buf(),
                line: line_no,
                reason,
            };
            if !line.ends_with('\n') {
                torn_tail = true;
                break;
            }
            let e: TimelineEntry =
                serde_json::from_str(line.trim_end()).map_err(|err| corrupt(err.to_string()))?;
            let expected = log.last_seq() + 1;
            if e.seq != expected {
                return Err(corrupt(format!(
                    "sequence {} where {expected} expected",
                    e.seq
                )));
            }
            log.index(e);
            good_len += n as u64;
        }
        drop(reader);
        if torn_tail {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        log.file = Some((path.to_path_buf(), file));
        Ok(log)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.seq)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    fn index(&mut self, e: TimelineEntry) {
        self.by_device
            .entry(e.device)
            .or_default()
            .push(self.entries.len());
        self.entries.push(e);
    }

    /// Persist one entry and assign it the next sequence number.
    pub fn append(
        &mut self,
        ts: u64,
        device: u32,
        body: EntryBody,
    ) -> Result<TimelineEntry, LogError> {
        let entry = TimelineEntry {
            seq: self.last_seq() + 1,
            ts,
            device,
            body,
        };
        if let Some((_, file)) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("timeline entries serialize");
            line.push(b'\n');
            file.write_all(&line)?;
            if self.fsync {
                file.sync_data()?;
            }
        }
        self.index(entry);
        Ok(entry)
    }

    /// Entries of one device with `seq > since`, optionally filtered by kind,
    /// in ascending order.
    pub fn query(
        &self,
        device: u32,
        since: u64,
        kinds: Option<&[EntryKind]>,
    ) -> Vec<TimelineEntry> {
        let Some(idx) = self.by_device.get(&device) else {
            return Vec::new();
        };
        let start = idx.partition_point(|&i| self.entries[i].seq <= since);
        idx[start..]
            .iter()
            .map(|&i| self.entries[i])
            .filter(|e| kinds.is_none_or(|k| k.contains(&e.kind())))
            .collect()
    }
}

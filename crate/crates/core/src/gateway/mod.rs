//! Frame ingestion, timeline persistence, alerting and command dispatch.
//!
//! [`Gateway`] is a synchronous state machine. It never talks to a socket:
//! transports hand it received bytes and write out the downlink frames it
//! returns. Callers that share a gateway between tasks wrap it in a lock;
//! every method leaves it consistent on return.

mod alerts;
mod log;
mod registry;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io;
use std::path::Path;

use serde::Serialize;

pub use alerts::{evaluate_alerts, AlertConfig, AlertState, NotificationEvent, NotificationKind};
pub use log::{
    CommandBody, CommandStatus, EntryBody, EntryKind, LogError, NotificationBody, TelemetryBody,
    TimelineEntry, TimelineLog,
};
pub use registry::{DeviceRecord, LatestTelemetry, Registry, RegistryEntry};

use crate::device::DeviceConfig;
use crate::protocol::{
    decode_frame, encode_frame, peek_header, AckPayload, AckStatus, CommandPayload, DecodeError,
    Frame, MsgType, Payload, TelemetryPayload,
};

pub const LOG_FILE: &str = "gateway.log";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayOptions {
    /// fsync the log after every append.
    pub fsync: bool,
    /// Queue commands for offline devices instead of failing them.
    pub queue_offline: bool,
    pub alerts: AlertConfig,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            fsync: true,
            queue_offline: false,
            alerts: AlertConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("registry: {0}")]
    Registry(#[from] io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("undecodable frame: {0}")]
    Decode(#[from] DecodeError),
    #[error("device {device_id}: duplicate seq {seq} (last accepted {last_seq})")]
    Duplicate {
        device_id: u32,
        seq: u32,
        last_seq: u32,
    },
    #[error("device {device_id}: {reason}")]
    Unexpected {
        device_id: u32,
        reason: &'static str,
    },
    #[error("storage failure: {0}")]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("device is not connected")]
    Offline,
    #[error("no acknowledgement before timeout")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("invalid command: {0}")]
    InvalidPayload(&'static str),
    #[error("device {0} is not registered")]
    UnknownDevice(u32),
    #[error("device {0} is offline")]
    Offline(u32),
    #[error("delivery failed: {0}")]
    Link(#[from] LinkError),
    #[error("device reply was not an acknowledgement: {0}")]
    BadReply(IngestError),
    #[error("storage failure: {0}")]
    Storage(#[from] StorageError),
}

/// Anything that can carry a command frame to a device and return its reply.
pub trait DeviceLink {
    fn deliver(&mut self, device_id: u32, frame: &[u8]) -> Result<Vec<u8>, LinkError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub telemetry_accepted: u64,
    pub acks_accepted: u64,
    pub duplicates: u64,
    /// Rejections by reason (decode error kind or protocol misuse).
    pub rejected: BTreeMap<&'static str, u64>,
    pub notifications: u64,
}

impl IngestStats {
    pub fn frames_accepted(&self) -> u64 {
        self.telemetry_accepted + self.acks_accepted
    }

    pub fn frames_rejected(&self) -> u64 {
        self.duplicates + self.rejected.values().sum::<u64>()
    }
}

/// A command whose ack has been processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandResolution {
    pub device_id: u32,
    pub frame_seq: u32,
    pub status: CommandStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub frame: Frame,
    /// Timeline entries appended, in order.
    pub entries: Vec<TimelineEntry>,
    /// Frames to send back to the device, in order: queued commands first,
    /// then the ack for this frame (telemetry only).
    pub downlink: Vec<Vec<u8>>,
    pub resolved: Option<CommandResolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    /// Send `frame` and feed the device's reply back through
    /// [`Gateway::ingest_frame`].
    Send { frame_seq: u32, frame: Vec<u8> },
    /// Device offline; the command waits for its next uplink.
    Queued {
        frame_seq: u32,
        entry: TimelineEntry,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatched {
    pub frame_seq: u32,
    pub status: CommandStatus,
    pub entries: Vec<TimelineEntry>,
}

fn ack_frame(device_id: u32, acked_seq: u32, status: AckStatus, now_ms: u64) -> Vec<u8> {
    encode_frame(&Frame {
        device_id,
        seq: acked_seq,
        timestamp_ms: now_ms,
        payload: Payload::Ack(AckPayload { acked_seq, status }),
    })
    .expect("ack frames are always encodable")
}

/// Rejection ack for a telemetry frame the gateway refused, if its header
/// is readable enough to address one.
pub fn rejection_ack(bytes: &[u8], now_ms: u64) -> Option<Vec<u8>> {
    let h = peek_header(bytes).ok()?;
    (h.msg_type == MsgType::Telemetry as u8)
        .then(|| ack_frame(h.device_id, h.seq, AckStatus::Rejected, now_ms))
}

#[derive(Debug)]
pub struct Gateway {
    log: TimelineLog,
    registry: Registry,
    devices: BTreeMap<u32, DeviceRecord>,
    opts: GatewayOptions,
    stats: IngestStats,
    pending: HashMap<(u32, u32), CommandPayload>,
    outbox: HashMap<u32, VecDeque<Vec<u8>>>,
    command_seq: HashMap<u32, u32>,
}

impl Gateway {
    pub fn in_memory(opts: GatewayOptions) -> Self {
        Self::from_parts(TimelineLog::in_memory(), Registry::in_memory(), opts)
    }

    /// Open a deployment directory, replaying its log.
    pub fn open(dir: &Path, opts: GatewayOptions) -> Result<Self, StorageError> {
        std::fs::create_dir_all(dir)?;
        let registry = Registry::open(&dir.join(REGISTRY_FILE))?;
        let log = TimelineLog::open(&dir.join(LOG_FILE), opts.fsync)?;
        Ok(Self::from_parts(log, registry, opts))
    }

    fn from_parts(log: TimelineLog, registry: Registry, opts: GatewayOptions) -> Self {
        let devices = registry
            .entries()
            .map(|e| (e.device, DeviceRecord::new(e.config, e.first_seen_ms)))
            .collect();
        let mut gw = Self {
            log,
            registry,
            devices,
            opts,
            stats: IngestStats::default(),
            pending: HashMap::new(),
            outbox: HashMap::new(),
            command_seq: HashMap::new(),
        };
        let entries = gw.log.entries().to_vec();
        for e in &entries {
            gw.replay(e);
        }
        gw
    }

    fn replay(&mut self, e: &TimelineEntry) {
        let alerts = self.opts.alerts;
        let rec = self
            .devices
            .entry(e.device)
            .or_insert_with(|| DeviceRecord::new(DeviceConfig::new(e.device), e.ts));
        match e.body {
            EntryBody::Telemetry(b) => {
                let payload = b.payload();
                let (alert, _) =
                    evaluate_alerts(&rec.alert, e.device, &rec.config, &payload, &alerts, e.ts);
                rec.alert = alert;
                rec.last_telemetry = Some(LatestTelemetry {
                    timestamp_ms: e.ts,
                    frame_seq: b.frame_seq,
                    payload,
                });
                rec.last_seq = Some(b.frame_seq);
                rec.last_rx_ms = Some(b.rx_ms);
                self.stats.telemetry_accepted += 1;
            }
            EntryBody::Notification(_) => self.stats.notifications += 1,
            EntryBody::Command(c) => {
                if c.status == CommandStatus::Ok {
                    rec.config.apply(&c.command);
                }
                let seq = self.command_seq.entry(e.device).or_default();
                *seq = (*seq).max(c.frame_seq);
            }
        }
    }

    pub fn options(&self) -> &GatewayOptions {
        &self.opts
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn log(&self) -> &TimelineLog {
        &self.log
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    pub fn device(&self, id: u32) -> Option<&DeviceRecord> {
        self.devices.get(&id)
    }

    pub fn latest(&self, id: u32) -> Option<LatestTelemetry> {
        self.devices.get(&id).and_then(|r| r.last_telemetry)
    }

    pub fn timeline(&self, id: u32, since: u64, kinds: Option<&[EntryKind]>) -> Vec<TimelineEntry> {
        self.log.query(id, since, kinds)
    }

    /// Register a device ahead of its first frame, with a known config.
    /// Already-known devices are left untouched.
    pub fn register_device(&mut self, cfg: DeviceConfig, now_ms: u64) -> Result<(), StorageError> {
        if self.devices.contains_key(&cfg.device_id) {
            return Ok(());
        }
        self.registry.insert(RegistryEntry {
            device: cfg.device_id,
            first_seen_ms: now_ms,
            config: cfg,
        })?;
        self.devices
            .insert(cfg.device_id, DeviceRecord::new(cfg, now_ms));
        Ok(())
    }

    fn reject(&mut self, reason: &'static str) {
        *self.stats.rejected.entry(reason).or_default() += 1;
    }

    /// Decode and apply one uplink frame received at `arrival_ms`.
    pub fn ingest_frame(&mut self, bytes: &[u8], arrival_ms: u64) -> Result<Ingested, IngestError> {
        let frame = match decode_frame(bytes) {
            Ok(f) => f,
            Err(e) => {
                self.reject(e.kind());
                return Err(e.into());
            }
        };
        match frame.payload {
            Payload::Telemetry(t) => self.ingest_telemetry(frame, t, arrival_ms),
            Payload::Ack(a) => self.ingest_ack(frame, a, arrival_ms),
            Payload::Command(_) => {
                self.reject("unexpected_command");
                Err(IngestError::Unexpected {
                    device_id: frame.device_id,
                    reason: "devices do not send commands",
                })
            }
        }
    }

    fn ingest_telemetry(
        &mut self,
        frame: Frame,
        t: TelemetryPayload,
        arrival_ms: u64,
    ) -> Result<Ingested, IngestError> {
        let id = frame.device_id;
        let known = self.devices.contains_key(&id);
        let mut rec = self
            .devices
            .get(&id)
            .cloned()
            .unwrap_or_else(|| DeviceRecord::new(DeviceConfig::new(id), arrival_ms));
        if let Some(last_seq) = rec.last_seq.filter(|&last| frame.seq <= last) {
            self.stats.duplicates += 1;
            return Err(IngestError::Duplicate {
                device_id: id,
                seq: frame.seq,
                last_seq,
            });
        }
        if !known {
            self.registry
                .insert(RegistryEntry {
                    device: id,
                    first_seen_ms: arrival_ms,
                    config: rec.config,
                })
                .map_err(StorageError::from)?;
        }

        let (alert, notes) = evaluate_alerts(
            &rec.alert,
            id,
            &rec.config,
            &t,
            &self.opts.alerts,
            frame.timestamp_ms,
        );
        let mut entries = Vec::with_capacity(1 + notes.len());
        let body = EntryBody::Telemetry(TelemetryBody::new(frame.seq, arrival_ms, &t));
        entries.push(
            self.log
                .append(frame.timestamp_ms, id, body)
                .map_err(StorageError::from)?,
        );
        for n in &notes {
            let body = EntryBody::Notification(NotificationBody {
                kind: n.kind,
                moisture_cpct: n.moisture_cpct,
            });
            entries.push(
                self.log
                    .append(n.timestamp_ms, id, body)
                    .map_err(StorageError::from)?,
            );
        }

        rec.alert = alert;
        rec.last_telemetry = Some(LatestTelemetry {
            timestamp_ms: frame.timestamp_ms,
            frame_seq: frame.seq,
            payload: t,
        });
        rec.last_seq = Some(frame.seq);
        rec.last_rx_ms = Some(arrival_ms);
        self.devices.insert(id, rec);
        self.stats.telemetry_accepted += 1;
        self.stats.notifications += notes.len() as u64;

        let mut downlink: Vec<Vec<u8>> = self.outbox.remove(&id).map(Vec::from).unwrap_or_default();
        downlink.push(ack_frame(id, frame.seq, AckStatus::Ok, arrival_ms));
        Ok(Ingested {
            frame,
            entries,
            downlink,
            resolved: None,
        })
    }

    fn ingest_ack(
        &mut self,
        frame: Frame,
        ack: AckPayload,
        arrival_ms: u64,
    ) -> Result<Ingested, IngestError> {
        let id = frame.device_id;
        let Some(cmd) = self.pending.get(&(id, ack.acked_seq)).copied() else {
            self.reject("unexpected_ack");
            return Err(IngestError::Unexpected {
                device_id: id,
                reason: "ack for no outstanding command",
            });
        };
        let status = match ack.status {
            AckStatus::Ok => CommandStatus::Ok,
            AckStatus::Rejected => CommandStatus::Rejected,
        };
        let body = EntryBody::Command(CommandBody {
            frame_seq: ack.acked_seq,
            status,
            command: cmd,
        });
        let entry = self
            .log
            .append(arrival_ms, id, body)
            .map_err(StorageError::from)?;
        self.pending.remove(&(id, ack.acked_seq));
        if status == CommandStatus::Ok {
            if let Some(rec) = self.devices.get_mut(&id) {
                rec.config.apply(&cmd);
            }
        }
        self.stats.acks_accepted += 1;
        Ok(Ingested {
            frame,
            entries: vec![entry],
            downlink: Vec::new(),
            resolved: Some(CommandResolution {
                device_id: id,
                frame_seq: ack.acked_seq,
                status,
            }),
        })
    }

    fn next_command_seq(&mut self, device_id: u32) -> u32 {
        let seq = self.command_seq.entry(device_id).or_default();
        *seq = seq.wrapping_add(1);
        *seq
    }

    /// Validate and frame a command. The caller delivers `Prepared::Send`
    /// frames and routes the reply back through [`Gateway::ingest_frame`].
    pub fn prepare_command(
        &mut self,
        device_id: u32,
        cmd: CommandPayload,
        now_ms: u64,
    ) -> Result<Prepared, DispatchError> {
        cmd.validate().map_err(DispatchError::InvalidPayload)?;
        let online = self
            .devices
            .get(&device_id)
            .ok_or(DispatchError::UnknownDevice(device_id))?
            .online(now_ms);
        if !online && !self.opts.queue_offline {
            return Err(DispatchError::Offline(device_id));
        }
        let frame_seq = self.next_command_seq(device_id);
        let frame = encode_frame(&Frame {
            device_id,
            seq: frame_seq,
            timestamp_ms: now_ms,
            payload: Payload::Command(cmd),
        })
        .map_err(|_| DispatchError::InvalidPayload("command does not encode"))?;
        self.pending.insert((device_id, frame_seq), cmd);
        if online {
            Ok(Prepared::Send { frame_seq, frame })
        } else {
            let entry = self.queue_command(device_id, frame_seq, frame, now_ms)?;
            Ok(Prepared::Queued { frame_seq, entry })
        }
    }

    /// Park a prepared command until the device's next uplink.
    pub fn queue_command(
        &mut self,
        device_id: u32,
        frame_seq: u32,
        frame: Vec<u8>,
        now_ms: u64,
    ) -> Result<TimelineEntry, StorageError> {
        let cmd = self
            .pending
            .get(&(device_id, frame_seq))
            .copied()
            .expect("queue_command on an unprepared command");
        let entry = self.log.append(
            now_ms,
            device_id,
            EntryBody::Command(CommandBody {
                frame_seq,
                status: CommandStatus::Queued,
                command: cmd,
            }),
        )?;
        self.outbox.entry(device_id).or_default().push_back(frame);
        Ok(entry)
    }

    /// Forget a prepared command that could not be delivered.
    pub fn abandon_command(&mut self, device_id: u32, frame_seq: u32) {
        self.pending.remove(&(device_id, frame_seq));
    }

    /// Send a command over `link` and wait for the device's ack.
    pub fn dispatch_command(
        &mut self,
        device_id: u32,
        cmd: CommandPayload,
        link: &mut dyn DeviceLink,
        now_ms: u64,
    ) -> Result<Dispatched, DispatchError> {
        match self.prepare_command(device_id, cmd, now_ms)? {
            Prepared::Queued { frame_seq, entry } => Ok(Dispatched {
                frame_seq,
                status: CommandStatus::Queued,
                entries: vec![entry],
            }),
            Prepared::Send { frame_seq, frame } => {
                let reply = match link.deliver(device_id, &frame) {
                    Ok(r) => r,
                    Err(LinkError::Offline) if self.opts.queue_offline => {
                        let entry = self.queue_command(device_id, frame_seq, frame, now_ms)?;
                        return Ok(Dispatched {
                            frame_seq,
                            status: CommandStatus::Queued,
                            entries: vec![entry],
                        });
                    }
                    Err(e) => {
                        self.abandon_command(device_id, frame_seq);
                        return Err(e.into());
                    }
                };
                match self.ingest_frame(&reply, now_ms) {
                    Ok(Ingested {
                        resolved: Some(r),
                        entries,
                        ..
                    }) if r.frame_seq == frame_seq => Ok(Dispatched {
                        frame_seq,
                        status: r.status,
                        entries,
                    }),
                    Ok(_) => {
                        self.abandon_command(device_id, frame_seq);
                        Err(DispatchError::BadReply(IngestError::Unexpected {
                            device_id,
                            reason: "reply did not resolve the command",
                        }))
                    }
                    Err(e) => {
                        self.abandon_command(device_id, frame_seq);
                        Err(DispatchError::BadReply(e))
                    }
                }
            }
        }
    }
}

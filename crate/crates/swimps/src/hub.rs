use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use swimps_core::device::DeviceConfig;
use swimps_core::gateway::{
    CommandStatus, DispatchError, Gateway, IngestError, Ingested, LinkError, Prepared,
    StorageError, TimelineEntry,
};
use swimps_core::protocol::CommandPayload;
use tokio::sync::{broadcast, mpsc, oneshot};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to; the simulated runner owns it.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

pub type DownlinkTx = mpsc::UnboundedSender<Vec<u8>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub device_id: u32,
    pub frame_seq: u32,
    pub status: CommandStatus,
}

/// A gateway shared between device connections, API handlers and the
/// event stream.
///
/// Every mutation happens under one lock, so appends are globally ordered
/// and readers never see half an ingest. Events are published while the
/// lock is held, which keeps the stream in log order.
pub struct Hub {
    gateway: Mutex<Gateway>,
    events: broadcast::Sender<TimelineEntry>,
    links: Mutex<HashMap<u32, (u64, DownlinkTx)>>,
    waiters: Mutex<HashMap<(u32, u32), oneshot::Sender<CommandStatus>>>,
    clock: Arc<dyn Clock>,
    ack_timeout: Duration,
}

impl Hub {
    pub fn new(gateway: Gateway, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self {
            gateway: Mutex::new(gateway),
            events: broadcast::channel(1024).0,
            links: Mutex::default(),
            waiters: Mutex::default(),
            clock,
            ack_timeout: Duration::from_secs(5),
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn gateway(&self) -> MutexGuard<'_, Gateway> {
        self.gateway.lock().expect("gateway lock poisoned")
    }

    pub fn subscribe(&self) -> broadcast::Receiver<TimelineEntry> {
        self.events.subscribe()
    }

    fn publish(&self, entries: &[TimelineEntry]) {
        for e in entries {
            // no subscribers is fine
            let _ = self.events.send(*e);
        }
    }

    pub fn register_device(&self, cfg: DeviceConfig) -> Result<(), StorageError> {
        let now = self.now_ms();
        self.gateway().register_device(cfg, now)
    }

    /// Ingest one uplink frame. The caller sends `downlink` back.
    pub fn ingest(&self, bytes: &[u8]) -> Result<Ingested, IngestError> {
        let now = self.now_ms();
        let mut gw = self.gateway();
        let out = gw.ingest_frame(bytes, now)?;
        self.publish(&out.entries);
        if let Some(r) = out.resolved {
            let waiter = self
                .waiters
                .lock()
                .expect("waiters poisoned")
                .remove(&(r.device_id, r.frame_seq));
            if let Some(tx) = waiter {
                let _ = tx.send(r.status);
            }
        }
        Ok(out)
    }

    /// Route downlink frames for `device_id` to connection `conn`.
    pub fn attach(&self, device_id: u32, conn: u64, tx: &DownlinkTx) {
        self.links
            .lock()
            .expect("links poisoned")
            .insert(device_id, (conn, tx.clone()));
    }

    pub fn detach(&self, conn: u64) {
        self.links
            .lock()
            .expect("links poisoned")
            .retain(|_, (c, _)| *c != conn);
    }

    /// Send a command and wait for the device's ack.
    ///
    /// With no live connection the command is queued for the device's
    /// next uplink when the gateway allows it, otherwise refused.
    pub async fn dispatch(
        &self,
        device_id: u32,
        cmd: CommandPayload,
    ) -> Result<CommandOutcome, DispatchError> {
        let now = self.now_ms();
        let (frame_seq, rx) = {
            let mut gw = self.gateway();
            let (frame_seq, frame) = match gw.prepare_command(device_id, cmd, now)? {
                Prepared::Queued { frame_seq, entry } => {
                    self.publish(&[entry]);
                    return Ok(queued(device_id, frame_seq));
                }
                Prepared::Send { frame_seq, frame } => (frame_seq, frame),
            };
            let link = self
                .links
                .lock()
                .expect("links poisoned")
                .get(&device_id)
                .map(|(_, tx)| tx.clone());
            let (tx, rx) = oneshot::channel();
            self.waiters
                .lock()
                .expect("waiters poisoned")
                .insert((device_id, frame_seq), tx);
            // the lock is still held, so the ack cannot overtake the waiter
            let unsent = match link {
                Some(l) => l.send(frame).err().map(|e| e.0),
                None => Some(frame),
            };
            if let Some(frame) = unsent {
                self.forget(device_id, frame_seq);
                if gw.options().queue_offline {
                    let entry = gw.queue_command(device_id, frame_seq, frame, now)?;
                    self.publish(&[entry]);
                    return Ok(queued(device_id, frame_seq));
                }
                gw.abandon_command(device_id, frame_seq);
                return Err(DispatchError::Offline(device_id));
            }
            (frame_seq, rx)
        };
        let err = match tokio::time::timeout(self.ack_timeout, rx).await {
            Ok(Ok(status)) => {
                return Ok(CommandOutcome {
                    device_id,
                    frame_seq,
                    status,
                })
            }
            Ok(Err(_)) => LinkError::Transport("connection dropped".into()),
            Err(_) => LinkError::Timeout,
        };
        self.forget(device_id, frame_seq);
        self.gateway().abandon_command(device_id, frame_seq);
        Err(err.into())
    }

    fn forget(&self, device_id: u32, frame_seq: u32) {
        self.waiters
            .lock()
            .expect("waiters poisoned")
            .remove(&(device_id, frame_seq));
    }
}

fn queued(device_id: u32, frame_seq: u32) -> CommandOutcome {
    CommandOutcome {
        device_id,
        frame_seq,
        status: CommandStatus::Queued,
    }
}

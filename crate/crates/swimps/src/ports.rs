//! Scenario ports that move frames over real sockets.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use swimps_core::device::{DeviceConfig, Downlink, Mailbox};
use swimps_core::gateway::{CommandStatus, Gateway, TimelineEntry};
use swimps_core::protocol::{peek_header, AckPayload, AckStatus, CommandPayload, FrameAssembler};
use swimps_core::scenario::{GatewayPort, GatewaySummary, PortError};
use tokio::runtime::Runtime;

use crate::client;
use crate::hub::{Clock, Hub, ManualClock};
use crate::net::serve_devices;

const ACK_TIMEOUT: Duration = Duration::from_secs(5);

fn port_err(e: impl std::fmt::Display) -> PortError {
    PortError(e.to_string())
}

struct Local {
    rt: Runtime,
    hub: Arc<Hub>,
}

enum Backend {
    Local(Local),
    Remote { http: Option<String> },
}

/// One device's radio: a TCP stream plus a reader thread that answers
/// commands itself and hands telemetry acks to the runner.
struct Radio {
    stream: Arc<Mutex<TcpStream>>,
    acks: mpsc::Receiver<AckPayload>,
    reader: Option<JoinHandle<()>>,
}

impl Radio {
    fn connect(addr: &str, mailbox: Mailbox, clock: Arc<ManualClock>) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut rd = stream.try_clone()?;
        let stream = Arc::new(Mutex::new(stream));
        let writer = stream.clone();
        let (tx, acks) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            let mut asm = FrameAssembler::new();
            let mut buf = [0u8; 4096];
            loop {
                let n = match rd.read(&mut buf) {
                    Ok(0) | Err(_) => return,
                    Ok(n) => n,
                };
                asm.push(&buf[..n]);
                while let Some(frame) = asm.next_frame() {
                    match mailbox.handle_downlink(&frame, clock.now_ms()) {
                        Downlink::Ack(a) => {
                            if tx.send(a).is_err() {
                                return;
                            }
                        }
                        Downlink::Command { reply, .. } | Downlink::Rejected { reply, .. } => {
                            let _ = writer.lock().expect("radio poisoned").write_all(&reply);
                        }
                        Downlink::Ignored => {}
                    }
                }
            }
        });
        Ok(Self {
            stream,
            acks,
            reader: Some(reader),
        })
    }
}

impl Drop for Radio {
    fn drop(&mut self) {
        if let Ok(s) = self.stream.lock() {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }
}

/// Devices talk to the gateway over TCP, either one this port starts on
/// loopback or a `swimps serve` elsewhere.
///
/// Each call blocks until the gateway has answered, so a run over sockets
/// produces the same log as one in process.
pub struct SocketPort {
    backend: Backend,
    devices_addr: String,
    clock: Arc<ManualClock>,
    radios: HashMap<u32, Radio>,
    accepted: u64,
    rejected: u64,
    notes_before: HashMap<u32, u64>,
}

impl SocketPort {
    /// Start a gateway service for `gateway` on 127.0.0.1 and connect to it.
    pub fn loopback(gateway: Gateway) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let clock = Arc::new(ManualClock::default());
        let hub = Hub::new(gateway, clock.clone());
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?.to_string();
        rt.spawn(serve_devices(listener, hub.clone()));
        Ok(Self::with(Backend::Local(Local { rt, hub }), addr, clock))
    }

    /// Connect to a running service. `http` enables scripted commands and
    /// the notification count in the summary.
    pub fn remote(devices_addr: &str, http: Option<String>) -> Self {
        let clock = Arc::new(ManualClock::default());
        Self::with(Backend::Remote { http }, devices_addr.into(), clock)
    }

    fn with(backend: Backend, devices_addr: String, clock: Arc<ManualClock>) -> Self {
        Self {
            backend,
            devices_addr,
            clock,
            radios: HashMap::new(),
            accepted: 0,
            rejected: 0,
            notes_before: HashMap::new(),
        }
    }

    /// The gateway behind a loopback port.
    pub fn hub(&self) -> Option<&Arc<Hub>> {
        match &self.backend {
            Backend::Local(l) => Some(&l.hub),
            Backend::Remote { .. } => None,
        }
    }

    fn remote_notifications(http: &str, device_id: u32) -> Result<u64, PortError> {
        let path = format!("/devices/{device_id}/timeline?kinds=notification");
        let resp = client::request(http, "GET", &path, None).map_err(port_err)?;
        let entries: Vec<TimelineEntry> = resp.json().map_err(port_err)?;
        Ok(entries.len() as u64)
    }
}

impl GatewayPort for SocketPort {
    fn register(
        &mut self,
        cfg: &DeviceConfig,
        mailbox: Mailbox,
        now_ms: u64,
    ) -> Result<(), PortError> {
        self.clock.set(now_ms);
        match &self.backend {
            Backend::Local(l) => l.hub.register_device(*cfg).map_err(port_err)?,
            Backend::Remote { http: Some(h) } => {
                let n = Self::remote_notifications(h, cfg.device_id)?;
                self.notes_before.insert(cfg.device_id, n);
            }
            Backend::Remote { http: None } => {}
        }
        let radio =
            Radio::connect(&self.devices_addr, mailbox, self.clock.clone()).map_err(port_err)?;
        self.radios.insert(cfg.device_id, radio);
        Ok(())
    }

    fn uplink(&mut self, device_id: u32, frame: &[u8], now_ms: u64) -> Result<bool, PortError> {
        self.clock.set(now_ms);
        let radio = self
            .radios
            .get(&device_id)
            .ok_or_else(|| port_err(format!("device {device_id} not registered")))?;
        let Ok(h) = peek_header(frame) else {
            // nothing the gateway could address an ack to
            self.rejected += 1;
            return Ok(false);
        };
        radio
            .stream
            .lock()
            .expect("radio poisoned")
            .write_all(frame)
            .map_err(port_err)?;
        loop {
            let ack = radio.acks.recv_timeout(ACK_TIMEOUT).map_err(|_| {
                port_err(format!("no ack for frame {} of device {device_id}", h.seq))
            })?;
            if ack.acked_seq == h.seq {
                let ok = ack.status == AckStatus::Ok;
                if ok {
                    self.accepted += 1;
                } else {
                    self.rejected += 1;
                }
                return Ok(ok);
            }
        }
    }

    fn command(
        &mut self,
        device_id: u32,
        cmd: CommandPayload,
        now_ms: u64,
    ) -> Result<CommandStatus, PortError> {
        self.clock.set(now_ms);
        match &self.backend {
            Backend::Local(l) => {
                l.rt.block_on(l.hub.dispatch(device_id, cmd))
                    .map(|o| o.status)
                    .map_err(port_err)
            }
            Backend::Remote { http: Some(h) } => {
                let body = serde_json::to_string(&cmd).map_err(port_err)?;
                let path = format!("/devices/{device_id}/command");
                let resp = client::request(h, "POST", &path, Some(&body)).map_err(port_err)?;
                if resp.status != 200 {
                    return Err(port_err(format!("HTTP {}: {}", resp.status, resp.body)));
                }
                let out: crate::hub::CommandOutcome = resp.json().map_err(port_err)?;
                Ok(out.status)
            }
            Backend::Remote { http: None } => {
                Err(port_err("remote transport without an http address"))
            }
        }
    }

    fn summary(&mut self) -> Result<GatewaySummary, PortError> {
        match &self.backend {
            Backend::Local(l) => {
                let gw = l.hub.gateway();
                let s = gw.stats();
                Ok(GatewaySummary {
                    telemetry_accepted: s.telemetry_accepted,
                    frames_rejected: s.frames_rejected(),
                    notifications: s.notifications,
                })
            }
            Backend::Remote { http } => {
                let mut notifications = 0;
                if let Some(h) = http {
                    for (&id, &before) in &self.notes_before {
                        notifications += Self::remote_notifications(h, id)?.saturating_sub(before);
                    }
                }
                Ok(GatewaySummary {
                    telemetry_accepted: self.accepted,
                    frames_rejected: self.rejected,
                    notifications,
                })
            }
        }
    }
}

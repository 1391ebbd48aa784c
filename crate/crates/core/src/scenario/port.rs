use std::collections::HashMap;

use crate::device::{DeviceConfig, Downlink, Mailbox};
use crate::gateway::{CommandStatus, DeviceLink, Gateway, IngestError, LinkError};
use crate::protocol::CommandPayload;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct PortError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GatewaySummary {
    pub telemetry_accepted: u64,
    pub frames_rejected: u64,
    pub notifications: u64,
}

/// The runner's view of a gateway, whatever transport sits in between.
///
/// Every call returns only once the gateway has finished with it, which
/// makes the tick order deterministic regardless of transport.
pub trait GatewayPort {
    /// Announce a device and hand over the mailbox its commands go to.
    fn register(
        &mut self,
        cfg: &DeviceConfig,
        mailbox: Mailbox,
        now_ms: u64,
    ) -> Result<(), PortError>;

    /// Deliver one uplink frame; `Ok(true)` when the gateway accepted it.
    fn uplink(&mut self, device_id: u32, frame: &[u8], now_ms: u64) -> Result<bool, PortError>;

    /// Issue a command from the gateway side and wait for the outcome.
    fn command(
        &mut self,
        device_id: u32,
        cmd: CommandPayload,
        now_ms: u64,
    ) -> Result<CommandStatus, PortError>;

    fn summary(&mut self) -> Result<GatewaySummary, PortError>;
}

struct MailboxLink<'a> {
    mailboxes: &'a HashMap<u32, Mailbox>,
    now_ms: u64,
}

impl DeviceLink for MailboxLink<'_> {
    fn deliver(&mut self, device_id: u32, frame: &[u8]) -> Result<Vec<u8>, LinkError> {
        let mb = self.mailboxes.get(&device_id).ok_or(LinkError::Offline)?;
        match mb.handle_downlink(frame, self.now_ms) {
            Downlink::Command { reply, .. } | Downlink::Rejected { reply, .. } => Ok(reply),
            other => Err(LinkError::Transport(format!(
                "device ignored command: {other:?}"
            ))),
        }
    }
}

/// Gateway in the same address space; frames still go through the codec.
#[derive(Debug)]
pub struct InProcessPort {
    gateway: Gateway,
    mailboxes: HashMap<u32, Mailbox>,
}

impl InProcessPort {
    pub fn new(gateway: Gateway) -> Self {
        Self {
            gateway,
            mailboxes: HashMap::new(),
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn into_gateway(self) -> Gateway {
        self.gateway
    }
}

impl GatewayPort for InProcessPort {
    fn register(
        &mut self,
        cfg: &DeviceConfig,
        mailbox: Mailbox,
        now_ms: u64,
    ) -> Result<(), PortError> {
        self.gateway
            .register_device(*cfg, now_ms)
            .map_err(|e| PortError(e.to_string()))?;
        self.mailboxes.insert(cfg.device_id, mailbox);
        Ok(())
    }

    fn uplink(&mut self, device_id: u32, frame: &[u8], now_ms: u64) -> Result<bool, PortError> {
        let ingested = match self.gateway.ingest_frame(frame, now_ms) {
            Ok(i) => i,
            Err(IngestError::Storage(e)) => return Err(PortError(e.to_string())),
            Err(_) => return Ok(false),
        };
        let mut accepted = false;
        let mailbox = self.mailboxes.get(&device_id);
        for d in &ingested.downlink {
            let Some(mb) = mailbox else { break };
            match mb.handle_downlink(d, now_ms) {
                Downlink::Ack(a) => accepted = a.status == crate::protocol::AckStatus::Ok,
                Downlink::Command { reply, .. } | Downlink::Rejected { reply, .. } => {
                    if let Err(IngestError::Storage(e)) = self.gateway.ingest_frame(&reply, now_ms)
                    {
                        return Err(PortError(e.to_string()));
                    }
                }
                Downlink::Ignored => {}
            }
        }
        Ok(accepted)
    }

    fn command(
        &mut self,
        device_id: u32,
        cmd: CommandPayload,
        now_ms: u64,
    ) -> Result<CommandStatus, PortError> {
        let mut link = MailboxLink {
            mailboxes: &self.mailboxes,
            now_ms,
        };
        self.gateway
            .dispatch_command(device_id, cmd, &mut link, now_ms)
            .map(|d| d.status)
            .map_err(|e| PortError(e.to_string()))
    }

    fn summary(&mut self) -> Result<GatewaySummary, PortError> {
        let s = self.gateway.stats();
        Ok(GatewaySummary {
            telemetry_accepted: s.telemetry_accepted,
            frames_rejected: s.frames_rejected(),
            notifications: s.notifications,
        })
    }
}

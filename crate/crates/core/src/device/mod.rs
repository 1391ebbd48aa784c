//! Firmware model of one irrigation node.
//!
//! The free functions ([`sample_sensors`], [`control_step`], [`power_step`],
//! [`render_display`], [`make_telemetry`]) are the pure building blocks;
//! [`Device`] strings them together the way the node's main loop does and
//! owns the command [`Mailbox`] the gateway writes into.

mod control;
mod display;
mod power;
mod sensors;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use control::{control_step, hysteresis, DeviceEvent};
pub use display::{render_display, DisplayFrame, DISPLAY_COLUMNS};
pub use power::{
    battery_mv, power_step, solar_at, PowerParams, PowerState, SolarInput, SolarParams,
};
pub use sensors::{sample_sensors, SensorNoise};

use crate::env::{SoilState, Weather};
use crate::protocol::{
    decode_frame, encode_frame, peek_header, AckPayload, AckStatus, CommandPayload, Frame, MsgType,
    OverrideMode, Payload, TelemetryFlags, TelemetryPayload,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub device_id: u32,
    /// Pump-on trigger, centi-percent.
    #[serde(default = "default_low")]
    pub low_threshold: u16,
    /// Pump-off trigger, centi-percent.
    #[serde(default = "default_high")]
    pub high_threshold: u16,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_s: u32,
    #[serde(rename = "override", default)]
    pub mode: OverrideMode,
}

fn default_low() -> u16 {
    DeviceConfig::DEFAULT_LOW
}

fn default_high() -> u16 {
    DeviceConfig::DEFAULT_HIGH
}

fn default_sample_interval() -> u32 {
    DeviceConfig::DEFAULT_SAMPLE_INTERVAL_S
}

impl DeviceConfig {
    pub const DEFAULT_LOW: u16 = 3000;
    pub const DEFAULT_HIGH: u16 = 3500;
    pub const DEFAULT_SAMPLE_INTERVAL_S: u32 = 60;

    pub fn new(device_id: u32) -> Self {
        Self {
            device_id,
            low_threshold: Self::DEFAULT_LOW,
            high_threshold: Self::DEFAULT_HIGH,
            sample_interval_s: Self::DEFAULT_SAMPLE_INTERVAL_S,
            mode: OverrideMode::Auto,
        }
    }

    /// Returns the offending field name and the violated rule.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        if self.low_threshold == 0 {
            return Err(("low_threshold", "must be > 0"));
        }
        if self.low_threshold >= self.high_threshold {
            return Err(("low_threshold", "must be < high_threshold"));
        }
        if self.high_threshold >= 10_000 {
            return Err(("high_threshold", "must be < 10000"));
        }
        if self.sample_interval_s < 1 {
            return Err(("sample_interval_s", "must be >= 1"));
        }
        Ok(())
    }

    /// Apply a gateway command to this configuration.
    pub fn apply(&mut self, cmd: &CommandPayload) {
        match *cmd {
            CommandPayload::SetThresholds {
                low_cpct,
                high_cpct,
            } => {
                self.low_threshold = low_cpct;
                self.high_threshold = high_cpct;
            }
            CommandPayload::PumpOverride { mode } => self.mode = mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorReading {
    pub moisture_cpct: u16,
    pub temp_cdegc: i16,
    pub rh_cpct: u16,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub pump_on: bool,
    /// Set when a low-moisture event fired; cleared on recovery.
    pub low_latch: bool,
    pub power: PowerState,
    pub last_reading: Option<SensorReading>,
    /// Sequence number of the last emitted telemetry.
    pub seq: u32,
}

impl DeviceState {
    pub fn new(power: PowerState) -> Self {
        Self {
            pump_on: false,
            low_latch: false,
            power,
            last_reading: None,
            seq: 0,
        }
    }
}

/// Build the next telemetry payload; bumps `state.seq` and returns the new
/// value alongside the payload.
pub fn make_telemetry(
    state: &mut DeviceState,
    r: &SensorReading,
    solar_mv: u16,
) -> (u32, TelemetryPayload) {
    state.seq = state.seq.wrapping_add(1);
    let payload = TelemetryPayload {
        moisture_cpct: r.moisture_cpct,
        temp_cdegc: r.temp_cdegc,
        rh_cpct: r.rh_cpct,
        battery_mv: state.power.battery_mv,
        solar_mv,
        flags: TelemetryFlags::new(state.pump_on, state.power.charging, state.low_latch),
    };
    (state.seq, payload)
}

/// What a device made of one downlink frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Downlink {
    /// The gateway acknowledged one of our uplink frames.
    Ack(AckPayload),
    /// A command was queued for the next control step; `reply` is the ack
    /// frame to send back.
    Command {
        seq: u32,
        cmd: CommandPayload,
        reply: Vec<u8>,
    },
    /// A command-shaped frame that failed to decode; `reply` rejects it.
    Rejected { seq: u32, reply: Vec<u8> },
    /// Not for us, or not decodable at all.
    Ignored,
}

/// Inbound command queue shared between the radio side of a device and its
/// control loop. Commands take effect at the next control step.
#[derive(Debug, Clone)]
pub struct Mailbox {
    device_id: u32,
    queue: Arc<Mutex<VecDeque<CommandPayload>>>,
}

impl Mailbox {
    pub fn new(device_id: u32) -> Self {
        Self {
            device_id,
            queue: Arc::default(),
        }
    }

    pub fn device_id(&self) -> u32 {
        self.device_id
    }

    pub fn post(&self, cmd: CommandPayload) {
        self.queue.lock().expect("mailbox poisoned").push_back(cmd);
    }

    pub fn drain(&self) -> Vec<CommandPayload> {
        self.queue
            .lock()
            .expect("mailbox poisoned")
            .drain(..)
            .collect()
    }

    fn ack(&self, seq: u32, status: AckStatus, now_ms: u64) -> Vec<u8> {
        // Ack headers echo the acknowledged seq.
        encode_frame(&Frame {
            device_id: self.device_id,
            seq,
            timestamp_ms: now_ms,
            payload: Payload::Ack(AckPayload {
                acked_seq: seq,
                status,
            }),
        })
        .expect("ack frames are always encodable")
    }

    pub fn handle_downlink(&self, bytes: &[u8], now_ms: u64) -> Downlink {
        match decode_frame(bytes) {
            Ok(f) if f.device_id != self.device_id => Downlink::Ignored,
            Ok(Frame {
                payload: Payload::Ack(a),
                ..
            }) => Downlink::Ack(a),
            Ok(Frame {
                seq,
                payload: Payload::Command(cmd),
                ..
            }) => {
                self.post(cmd);
                Downlink::Command {
                    seq,
                    cmd,
                    reply: self.ack(seq, AckStatus::Ok, now_ms),
                }
            }
            Ok(_) => Downlink::Ignored,
            Err(_) => match peek_header(bytes) {
                Ok(h) if h.device_id == self.device_id && h.msg_type == MsgType::Command as u8 => {
                    Downlink::Rejected {
                        seq: h.seq,
                        reply: self.ack(h.seq, AckStatus::Rejected, now_ms),
                    }
                }
                _ => Downlink::Ignored,
            },
        }
    }
}

/// One simulated node: configuration, firmware state and its mailbox.
#[derive(Debug, Clone)]
pub struct Device {
    cfg: DeviceConfig,
    state: DeviceState,
    power_params: PowerParams,
    noise: Option<SensorNoise>,
    mailbox: Mailbox,
}

impl Device {
    pub fn new(
        cfg: DeviceConfig,
        power: PowerState,
        power_params: PowerParams,
        noise: Option<SensorNoise>,
    ) -> Self {
        Self {
            mailbox: Mailbox::new(cfg.device_id),
            cfg,
            state: DeviceState::new(power),
            power_params,
            noise,
        }
    }

    pub fn id(&self) -> u32 {
        self.cfg.device_id
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn mailbox(&self) -> Mailbox {
        self.mailbox.clone()
    }

    pub fn sample(&mut self, soil: &SoilState, w: &Weather, timestamp_ms: u64) -> SensorReading {
        sample_sensors(soil, w, self.noise.as_mut(), timestamp_ms)
    }

    /// Apply pending commands, then run one control step.
    pub fn control(&mut self, r: &SensorReading) -> Vec<DeviceEvent> {
        for cmd in self.mailbox.drain() {
            self.cfg.apply(&cmd);
        }
        let (next, events) = control_step(&self.state, r, &self.cfg);
        self.state = next;
        events
    }

    pub fn power(&mut self, pump_on: bool, solar_ma: f64, dt_s: f64) {
        self.state.power = power_step(
            &self.state.power,
            pump_on,
            solar_ma,
            dt_s,
            &self.power_params,
        );
    }

    pub fn telemetry(&mut self, r: &SensorReading, solar_mv: u16) -> Frame {
        let (seq, payload) = make_telemetry(&mut self.state, r, solar_mv);
        Frame {
            device_id: self.cfg.device_id,
            seq,
            timestamp_ms: r.timestamp_ms,
            payload: Payload::Telemetry(payload),
        }
    }

    pub fn display(&self) -> Option<DisplayFrame> {
        self.state
            .last_reading
            .map(|r| render_display(&r, self.state.pump_on))
    }
}

//! Low-moisture pump control with a hysteresis band.

use serde::{Deserialize, Serialize};

use crate::protocol::OverrideMode;

use super::{DeviceConfig, DeviceState, SensorReading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviceEvent {
    LowMoisture {
        moisture_cpct: u16,
        timestamp_ms: u64,
    },
    LatchCleared {
        moisture_cpct: u16,
        timestamp_ms: u64,
    },
    PumpStarted {
        moisture_cpct: u16,
        timestamp_ms: u64,
    },
    PumpStopped {
        moisture_cpct: u16,
        timestamp_ms: u64,
    },
}

/// Pump decision in automatic mode given the previous pump state.
pub fn hysteresis(pump_on: bool, moisture_cpct: u16, low: u16, high: u16) -> bool {
    if !pump_on && moisture_cpct < low {
        true
    } else if pump_on && moisture_cpct >= high {
        false
    } else {
        pump_on
    }
}

pub fn control_step(
    state: &DeviceState,
    r: &SensorReading,
    cfg: &DeviceConfig,
) -> (DeviceState, Vec<DeviceEvent>) {
    let mut next = *state;
    let mut events = Vec::new();
    let m = r.moisture_cpct;
    let ts = r.timestamp_ms;

    if !state.low_latch && m < cfg.low_threshold {
        next.low_latch = true;
        events.push(DeviceEvent::LowMoisture {
            moisture_cpct: m,
            timestamp_ms: ts,
        });
    } else if state.low_latch && m >= cfg.high_threshold {
        next.low_latch = false;
        events.push(DeviceEvent::LatchCleared {
            moisture_cpct: m,
            timestamp_ms: ts,
        });
    }

    next.pump_on = match cfg.mode {
        OverrideMode::Auto => hysteresis(state.pump_on, m, cfg.low_threshold, cfg.high_threshold),
        OverrideMode::ForceOn => true,
        OverrideMode::ForceOff => false,
    };
    match (state.pump_on, next.pump_on) {
        (false, true) => events.push(DeviceEvent::PumpStarted {
            moisture_cpct: m,
            timestamp_ms: ts,
        }),
        (true, false) => events.push(DeviceEvent::PumpStopped {
            moisture_cpct: m,
            timestamp_ms: ts,
        }),
        _ => {}
    }
    next.last_reading = Some(*r);
    (next, events)
}

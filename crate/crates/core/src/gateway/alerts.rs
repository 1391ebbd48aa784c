//! Debounced low-moisture notifications.

use serde::{Deserialize, Serialize};

use crate::device::DeviceConfig;
use crate::protocol::TelemetryPayload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertConfig {
    /// Recovery level that re-arms the alert; `None` uses the device's
    /// high threshold.
    pub clear_cpct: Option<u16>,
    pub cooldown_s: u64,
}

impl Default for AlertConfig {
    fn default() -> Self {
        Self {
            clear_cpct: None,
            cooldown_s: 3600,
        }
    }
}

impl AlertConfig {
    pub fn clear_level(&self, device: &DeviceConfig) -> u16 {
        self.clear_cpct.unwrap_or(device.high_threshold)
    }

    pub fn validate_for(&self, device: &DeviceConfig) -> Result<(), &'static str> {
        if self.clear_level(device) <= device.low_threshold {
            Err("clear_cpct must be above the device low threshold")
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NotificationKind {
    LowMoisture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub device_id: u32,
    pub kind: NotificationKind,
    pub timestamp_ms: u64,
    pub moisture_cpct: u16,
}

/// Per-device debounce memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertState {
    /// A recovery has been seen since the last notification.
    pub armed: bool,
    pub prev_latch: bool,
    pub last_alert_ms: Option<u64>,
}

impl Default for AlertState {
    fn default() -> Self {
        Self {
            armed: true,
            prev_latch: false,
            last_alert_ms: None,
        }
    }
}

/// Decide whether telemetry `t` from `device_id` raises a notification.
///
/// An armed device alerts on a rising low-latch flag or on moisture below
/// its low threshold. Once it has alerted it stays quiet until moisture
/// reaches the clear level, unless the condition is still present after
/// the cooldown.
pub fn evaluate_alerts(
    state: &AlertState,
    device_id: u32,
    device: &DeviceConfig,
    t: &TelemetryPayload,
    cfg: &AlertConfig,
    now_ms: u64,
) -> (AlertState, Vec<NotificationEvent>) {
    let mut next = *state;
    let latch = t.flags.low_latch();
    let low = t.moisture_cpct < device.low_threshold;
    let rising = latch && !state.prev_latch;
    next.prev_latch = latch;
    if t.moisture_cpct >= cfg.clear_level(device) {
        next.armed = true;
    }
    let cooled = state
        .last_alert_ms
        .is_none_or(|last| now_ms.saturating_sub(last) >= cfg.cooldown_s.saturating_mul(1000));
    let fire = if next.armed {
        rising || low
    } else {
        (latch || low) && cooled
    };
    if !fire {
        return (next, Vec::new());
    }
    next.armed = false;
    next.last_alert_ms = Some(now_ms);
    (
        next,
        vec![NotificationEvent {
            device_id,
            kind: NotificationKind::LowMoisture,
            timestamp_ms: now_ms,
            moisture_cpct: t.moisture_cpct,
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::TelemetryFlags;
    use proptest::prelude::*;

    fn telemetry(m: u16, latch: bool) -> TelemetryPayload {
        TelemetryPayload {
            moisture_cpct: m,
            temp_cdegc: 2500,
            rh_cpct: 5000,
            battery_mv: 4000,
            solar_mv: 0,
            flags: TelemetryFlags::new(false, false, latch),
        }
    }

    fn run(trace: &[u16], cfg: &AlertConfig) -> usize {
        let dev = DeviceConfig::new(1);
        let mut s = AlertState::default();
        let mut n = 0;
        for (i, &m) in trace.iter().enumerate() {
            let (next, ev) =
                evaluate_alerts(&s, 1, &dev, &telemetry(m, false), cfg, i as u64 * 60_000);
            n += ev.len();
            s = next;
        }
        n
    }

    #[test]
    fn single_crossing_one_event() {
        assert_eq!(
            run(&[4000, 3200, 2900, 3100, 3600], &AlertConfig::default()),
            1
        );
    }

    #[test]
    fn persistent_low_is_debounced() {
        let mut trace = vec![4000];
        trace.extend([2500; 10]);
        assert_eq!(run(&trace, &AlertConfig::default()), 1);
    }

    #[test]
    fn recovery_rearms() {
        let trace = [4000, 2500, 2600, 3600, 3400, 2800, 2700];
        assert_eq!(run(&trace, &AlertConfig::default()), 2);
    }

    #[test]
    fn partial_recovery_does_not_rearm() {
        // 3300 is above low but below the clear level
        let trace = [4000, 2500, 3300, 2500, 3300, 2500];
        assert_eq!(run(&trace, &AlertConfig::default()), 1);
    }

    #[test]
    fn cooldown_allows_repeat() {
        let cfg = AlertConfig {
            clear_cpct: None,
            cooldown_s: 600,
        };
        // samples every 60 s; 25 low samples → alerts at 0, 10, 20
        let trace = [2500; 25];
        assert_eq!(run(&trace, &cfg), 3);
    }

    #[test]
    fn rising_latch_alerts() {
        let dev = DeviceConfig::new(1);
        let cfg = AlertConfig::default();
        let (s, ev) = evaluate_alerts(
            &AlertState::default(),
            9,
            &dev,
            &telemetry(3200, true),
            &cfg,
            5,
        );
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].device_id, 9);
        assert_eq!(ev[0].moisture_cpct, 3200);
        let (_, ev) = evaluate_alerts(&s, 9, &dev, &telemetry(3200, true), &cfg, 6);
        assert!(ev.is_empty());
    }

    #[test]
    fn clear_level_validation() {
        let dev = DeviceConfig::new(1);
        assert!(AlertConfig::default().validate_for(&dev).is_ok());
        let bad = AlertConfig {
            clear_cpct: Some(3000),
            cooldown_s: 0,
        };
        assert!(bad.validate_for(&dev).is_err());
    }

    /// Build a trace with `n` separated excursions.
    fn excursions(n: usize, depth: &[u16], dwell: usize) -> Vec<u16> {
        let mut trace = vec![4000];
        for i in 0..n {
            for k in 0..dwell {
                trace.push(depth[(i + k) % depth.len()]);
            }
            trace.push(3500 + (i as u16 % 7) * 100);
        }
        trace
    }

    proptest! {
        #[test]
        fn n_excursions_n_events(n in 0usize..12, depth in proptest::collection::vec(0u16..3000, 1..5), dwell in 1usize..40) {
            let trace = excursions(n, &depth, dwell);
            prop_assert_eq!(run(&trace, &AlertConfig::default()), n);
        }
    }
}

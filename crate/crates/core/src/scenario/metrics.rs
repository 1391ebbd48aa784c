use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const METRICS_FILE: &str = "metrics.json";

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    /// Pump-on device steps over all device steps.
    pub pump_duty_cycle: f64,
    /// Moisture delivered by irrigation, percentage points summed over
    /// devices (irrigation rate × pump-on minutes).
    pub water_applied: f64,
    pub min_moisture: f64,
    pub max_moisture: f64,
    pub mean_moisture: f64,
    pub notification_count: u64,
    /// Mean final state of charge over devices.
    pub final_soc: f64,
    pub frames_sent: u64,
    pub frames_accepted: u64,
    pub frames_rejected: u64,
}

/// Running totals a run feeds once per device step.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    pump_steps: u64,
    steps: u64,
    water_applied: f64,
    min: Option<f64>,
    max: Option<f64>,
    sum: f64,
}

impl MetricsAccumulator {
    pub fn record(&mut self, moisture: f64, pump_on: bool, water: f64) {
        self.steps += 1;
        if pump_on {
            self.pump_steps += 1;
            self.water_applied += water;
        }
        self.min = Some(self.min.map_or(moisture, |m| m.min(moisture)));
        self.max = Some(self.max.map_or(moisture, |m| m.max(moisture)));
        self.sum += moisture;
    }

    pub fn finish(
        &self,
        notification_count: u64,
        final_soc: f64,
        frames_sent: u64,
        frames_accepted: u64,
        frames_rejected: u64,
    ) -> Metrics {
        let steps = self.steps.max(1) as f64;
        let min = self.min.unwrap_or(0.0);
        let max = self.max.unwrap_or(0.0);
        Metrics {
            pump_duty_cycle: self.pump_steps as f64 / steps,
            water_applied: self.water_applied,
            min_moisture: min,
            max_moisture: max,
            // summation rounding must not push the mean outside [min, max]
            mean_moisture: (self.sum / steps).clamp(min, max),
            notification_count,
            final_soc,
            frames_sent,
            frames_accepted,
            frames_rejected,
        }
    }
}

/// Write `metrics.json` into `dir`.
pub fn emit_metrics(metrics: &Metrics, dir: &Path) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(metrics).expect("metrics serialize");
    bytes.push(b'\n');
    std::fs::write(dir.join(METRICS_FILE), bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pump_never_on() {
        let mut acc = MetricsAccumulator::default();
        for m in [40.0, 39.0, 38.0] {
            acc.record(m, false, 0.5);
        }
        let m = acc.finish(0, 1.0, 3, 3, 0);
        assert_eq!(m.pump_duty_cycle, 0.0);
        assert_eq!(m.water_applied, 0.0);
        assert_eq!(
            (m.min_moisture, m.max_moisture, m.mean_moisture),
            (38.0, 40.0, 39.0)
        );
    }

    #[test]
    fn pump_always_on() {
        let mut acc = MetricsAccumulator::default();
        for m in [40.0, 41.0] {
            acc.record(m, true, 0.5);
        }
        let m = acc.finish(0, 1.0, 0, 0, 0);
        assert_eq!(m.pump_duty_cycle, 1.0);
        assert_eq!(m.water_applied, 1.0);
    }

    #[test]
    fn file_has_exactly_the_metric_fields() {
        let dir = tempfile::tempdir().unwrap();
        let m = MetricsAccumulator::default().finish(3, 0.5, 1, 1, 0);
        emit_metrics(&m, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            vec![
                "final_soc",
                "frames_accepted",
                "frames_rejected",
                "frames_sent",
                "max_moisture",
                "mean_moisture",
                "min_moisture",
                "notification_count",
                "pump_duty_cycle",
                "water_applied"
            ]
        );
        assert_eq!(v["notification_count"], 3);
    }
}

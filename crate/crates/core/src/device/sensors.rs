//! DHT11-class climate sensor and capacitive soil probe.

use crate::env::{SoilState, Weather};
use crate::rng::GaussianStream;

use super::SensorReading;

/// Additive probe noise, in centi-percent.
#[derive(Debug, Clone)]
pub struct SensorNoise {
    stream: GaussianStream,
    sigma_cpct: f64,
}

impl SensorNoise {
    pub fn new(seed: u64, stream: u64, sigma_cpct: f64) -> Self {
        Self {
            stream: GaussianStream::new(seed, stream),
            sigma_cpct,
        }
    }

    fn draw(&mut self) -> f64 {
        self.stream.next_scaled(self.sigma_cpct)
    }
}

/// Whole degrees in [0, 50] °C, whole percent in [20, 90] %RH.
pub fn sample_sensors(
    soil: &SoilState,
    w: &Weather,
    noise: Option<&mut SensorNoise>,
    timestamp_ms: u64,
) -> SensorReading {
    let temp = w.temp_c.round().clamp(0.0, 50.0);
    let rh = w.rh_pct.round().clamp(20.0, 90.0);
    let jitter = noise.map_or(0.0, SensorNoise::draw);
    let moisture = (soil.moisture * 100.0 + jitter)
        .round()
        .clamp(0.0, 10_000.0);
    SensorReading {
        moisture_cpct: moisture as u16,
        temp_cdegc: (temp as i16) * 100,
        rh_cpct: (rh as u16) * 100,
        timestamp_ms,
    }
}

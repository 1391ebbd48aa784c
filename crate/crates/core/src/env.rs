//! Soil-water bucket and diurnal weather.
//!
//! Scenario time `t = 0` is taken as 06:00 local, so the sinusoid peaks at
//! midday (t = 21 600 s) and bottoms out at midnight.

use serde::{Deserialize, Serialize};

use crate::rng::gaussian_at;

const DAY_S: f64 = 86_400.0;

const TEMP_STREAM: u64 = 0x7465_6d70;
const RH_STREAM: u64 = 0x7268_7263;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    /// Base drying rate, % moisture per minute.
    pub e0: f64,
    /// Temperature sensitivity of drying, per °C.
    pub a_t: f64,
    /// Humidity sensitivity of drying.
    pub a_h: f64,
    /// Wetting rate while the pump runs, % moisture per minute.
    pub irr_rate: f64,
    pub t_mean: f64,
    pub t_amp: f64,
    pub rh_mean: f64,
    pub rh_amp: f64,
    /// Standard deviation of the weather noise (°C for temperature, % for RH).
    pub noise_sigma: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            e0: 0.05,
            a_t: 0.02,
            a_h: 0.5,
            irr_rate: 0.5,
            t_mean: 28.0,
            t_amp: 5.0,
            rh_mean: 70.0,
            rh_amp: 15.0,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvParamsError {
    #[error("{field}: {reason}")]
    Invalid {
        field: &'static str,
        reason: &'static str,
    },
}

impl EnvParams {
    pub fn validate(&self) -> Result<(), EnvParamsError> {
        let bad = |field, reason| Err(EnvParamsError::Invalid { field, reason });
        let all_finite = [
            self.e0,
            self.a_t,
            self.a_h,
            self.irr_rate,
            self.t_mean,
            self.t_amp,
            self.rh_mean,
            self.rh_amp,
            self.noise_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("env", "all parameters must be finite");
        }
        if self.e0 < 0.0 {
            return bad("e0", "must be >= 0");
        }
        if self.irr_rate <= 0.0 {
            return bad("irr_rate", "must be > 0");
        }
        if self.t_amp < 0.0 {
            return bad("t_amp", "must be >= 0");
        }
        if self.rh_amp < 0.0 {
            return bad("rh_amp", "must be >= 0");
        }
        if self.rh_mean - self.rh_amp < 0.0 || self.rh_mean + self.rh_amp > 100.0 {
            return bad("rh_mean", "rh_mean ± rh_amp must stay within [0, 100]");
        }
        if self.noise_sigma < 0.0 {
            return bad("noise_sigma", "must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilState {
    /// Volumetric water content, percent.
    pub moisture: f64,
}

impl SoilState {
    pub fn new(moisture: f64) -> Self {
        Self {
            moisture: moisture.clamp(0.0, 100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    pub temp_c: f64,
    pub rh_pct: f64,
}

/// Air temperature and relative humidity at `t` seconds into the scenario.
///
/// Noise is addressed by `(seed, t)` so the result does not depend on how
/// many times or in which order the function is called.
pub fn weather_at(t: f64, params: &EnvParams) -> Weather {
    let phase = (std::f64::consts::TAU * t / DAY_S).sin();
    let (temp_noise, rh_noise) = if params.noise_sigma > 0.0 {
        let index = t.to_bits();
        (
            params.noise_sigma * gaussian_at(params.seed, TEMP_STREAM, index),
            params.noise_sigma * gaussian_at(params.seed, RH_STREAM, index),
        )
    } else {
        (0.0, 0.0)
    };
    Weather {
        temp_c: params.t_mean + params.t_amp * phase + temp_noise,
        rh_pct: (params.rh_mean - params.rh_amp * phase + rh_noise).clamp(0.0, 100.0),
    }
}

/// Evapotranspiration proxy, % moisture per minute. Never negative.
pub fn et_rate(w: &Weather, params: &EnvParams) -> f64 {
    let rate = params.e0
        * (1.0 + params.a_t * (w.temp_c - 25.0))
        * (1.0 - params.a_h * (w.rh_pct - 50.0) / 100.0);
    rate.max(0.0)
}

/// Advance the bucket by `dt_min` minutes.
pub fn step_soil(
    s: SoilState,
    rate: f64,
    pump_on: bool,
    dt_min: f64,
    params: &EnvParams,
) -> SoilState {
    let wetting = if pump_on { params.irr_rate } else { 0.0 };
    SoilState {
        moisture: (s.moisture - rate * dt_min + wetting * dt_min).clamp(0.0, 100.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quiet() -> EnvParams {
        EnvParams {
            noise_sigma: 0.0,
            ..EnvParams::default()
        }
    }

    #[test]
    fn flat_weather_when_amplitudes_are_zero() {
        let p = EnvParams {
            t_amp: 0.0,
            rh_amp: 0.0,
            t_mean: 28.0,
            ..quiet()
        };
        for t in [0.0, 1234.0, 21_600.0, 86_399.0, 500_000.0] {
            assert_eq!(weather_at(t, &p).temp_c, 28.0);
        }
    }

    #[test]
    fn quarter_and_half_day_temperatures() {
        let p = EnvParams {
            t_mean: 28.0,
            t_amp: 5.0,
            ..quiet()
        };
        assert_relative_eq!(weather_at(21_600.0, &p).temp_c, 33.0, epsilon = 1e-12);
        assert_relative_eq!(weather_at(43_200.0, &p).temp_c, 28.0, epsilon = 1e-12);
        // humidity moves opposite to temperature
        assert_relative_eq!(weather_at(21_600.0, &p).rh_pct, 55.0, epsilon = 1e-12);
    }

    #[test]
    fn humidity_is_clamped() {
        let p = EnvParams {
            rh_mean: 95.0,
            rh_amp: 5.0,
            noise_sigma: 30.0,
            seed: 3,
            ..EnvParams::default()
        };
        for k in 0..500 {
            let rh = weather_at(k as f64 * 60.0, &p).rh_pct;
            assert!((0.0..=100.0).contains(&rh));
        }
    }

    #[test]
    fn noise_is_seeded() {
        let p = EnvParams {
            seed: 99,
            ..EnvParams::default()
        };
        let a = weather_at(3600.0, &p);
        assert_eq!(a, weather_at(3600.0, &p));
        let q = EnvParams { seed: 100, ..p };
        assert_ne!(a, weather_at(3600.0, &q));
    }

    #[test]
    fn et_reference_point_and_hot_case() {
        let p = EnvParams {
            e0: 0.05,
            a_t: 0.02,
            a_h: 0.5,
            ..quiet()
        };
        let reference = Weather {
            temp_c: 25.0,
            rh_pct: 50.0,
        };
        assert_eq!(et_rate(&reference, &p), 0.05);
        let hot = Weather {
            temp_c: 35.0,
            rh_pct: 50.0,
        };
        // 0.05 * (1 + 0.02*10) * (1 - 0) = 0.06
        assert_relative_eq!(et_rate(&hot, &p), 0.06, epsilon = 1e-15);
    }

    #[test]
    fn et_clamps_negative_product() {
        let p = EnvParams {
            a_t: 0.2,
            ..quiet()
        };
        let frigid = Weather {
            temp_c: 0.0,
            rh_pct: 50.0,
        };
        assert_eq!(et_rate(&frigid, &p), 0.0);
    }

    #[test]
    fn soil_step_examples() {
        let p = EnvParams {
            irr_rate: 0.5,
            ..quiet()
        };
        let s = SoilState::new(40.0);
        assert_eq!(step_soil(s, 0.0, false, 5.0, &p), s);
        // 40 - 0.06 + 0.5 = 40.44
        assert_relative_eq!(
            step_soil(s, 0.06, true, 1.0, &p).moisture,
            40.44,
            epsilon = 1e-12
        );
        assert_eq!(
            step_soil(SoilState::new(0.01), 1.0, false, 1.0, &p).moisture,
            0.0
        );
    }

    #[test]
    fn default_params_are_valid() {
        EnvParams::default().validate().unwrap();
        let bad = EnvParams {
            rh_mean: 90.0,
            rh_amp: 20.0,
            ..EnvParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = EnvParams {
            irr_rate: 0.0,
            ..EnvParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn soil_stays_in_range(m in 0.0f64..=100.0, rate in 0.0f64..10.0, pump: bool, dt in 0.0f64..120.0, irr in 0.01f64..10.0) {
            let p = EnvParams { irr_rate: irr, ..quiet() };
            let out = step_soil(SoilState::new(m), rate, pump, dt, &p).moisture;
            prop_assert!((0.0..=100.0).contains(&out));
        }

        #[test]
        fn pump_outpacing_drying_never_dries(m in 0.0f64..=100.0, rate in 0.0f64..1.0, extra in 0.0f64..1.0, dt in 0.0f64..60.0) {
            let p = EnvParams { irr_rate: rate + extra + 1e-9, ..quiet() };
            let out = step_soil(SoilState::new(m), rate, true, dt, &p).moisture;
            prop_assert!(out >= m);
        }

        #[test]
        fn drying_strictly_decreases(m in 0.001f64..=100.0, rate in 0.001f64..5.0, dt in 0.01f64..60.0) {
            let p = quiet();
            let out = step_soil(SoilState::new(m), rate, false, dt, &p).moisture;
            prop_assert!(out < m);
        }

        #[test]
        fn weather_is_deterministic(t in 0.0f64..1.0e7, seed: u64) {
            let p = EnvParams { seed, ..EnvParams::default() };
            prop_assert_eq!(weather_at(t, &p), weather_at(t, &p));
        }
    }
}

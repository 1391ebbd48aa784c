//! Solar charge controller and Li-ion battery bookkeeping.

use serde::{Deserialize, Serialize};

const DAY_S: f64 = 86_400.0;

/// Currents drawn and limits enforced by the power path, all in mA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    pub mcu_ma: f64,
    pub pump_ma: f64,
    /// Charge controller current cap.
    pub charge_limit_ma: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            mcu_ma: 80.0,
            pump_ma: 500.0,
            charge_limit_ma: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerState {
    /// State of charge in [0, 1].
    pub soc: f64,
    pub capacity_mah: f64,
    pub charging: bool,
    pub battery_mv: u16,
}

/// Terminal voltage as an affine map of charge over 3.0-4.2 V.
pub fn battery_mv(soc: f64) -> u16 {
    (3000.0 + (1200.0 * soc.clamp(0.0, 1.0)).round()) as u16
}

impl PowerState {
    pub fn new(soc: f64, capacity_mah: f64) -> Self {
        let soc = soc.clamp(0.0, 1.0);
        Self {
            soc,
            capacity_mah,
            charging: false,
            battery_mv: battery_mv(soc),
        }
    }
}

/// Integrate the battery over `dt_s` seconds.
///
/// A zero-length step returns the state untouched.
pub fn power_step(
    p: &PowerState,
    pump_on: bool,
    solar_ma: f64,
    dt_s: f64,
    params: &PowerParams,
) -> PowerState {
    if dt_s == 0.0 {
        return *p;
    }
    let load_ma = params.mcu_ma + if pump_on { params.pump_ma } else { 0.0 };
    let net_ma = solar_ma.min(params.charge_limit_ma) - load_ma;
    let soc = (p.soc + net_ma * (dt_s / 3600.0) / p.capacity_mah).clamp(0.0, 1.0);
    PowerState {
        soc,
        capacity_mah: p.capacity_mah,
        charging: net_ma > 0.0 && soc < 1.0,
        battery_mv: battery_mv(soc),
    }
}

/// Panel output over the day: a half-sine from 06:00 to 18:00.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarParams {
    /// Short-circuit current at solar noon.
    pub peak_ma: f64,
    /// Panel voltage at full sun.
    pub panel_mv: f64,
}

impl Default for SolarParams {
    fn default() -> Self {
        Self {
            peak_ma: 800.0,
            panel_mv: 12_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarInput {
    pub current_ma: f64,
    pub voltage_mv: u16,
}

pub fn solar_at(t_s: f64, params: &SolarParams) -> SolarInput {
    let sun = (std::f64::consts::TAU * t_s / DAY_S).sin().max(0.0);
    SolarInput {
        current_ma: params.peak_ma * sun,
        voltage_mv: (params.panel_mv * sun)
            .round()
            .clamp(0.0, f64::from(u16::MAX)) as u16,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pump_drain_over_one_minute() {
        let p = PowerState::new(0.5, 2000.0);
        let next = power_step(&p, true, 0.0, 60.0, &PowerParams::default());
        // -580 mA for 1/60 h = -9.6667 mAh of 2000 mAh
        let expected_mah = 0.5 * 2000.0 - 580.0 / 60.0;
        assert_relative_eq!(next.soc * 2000.0, expected_mah, epsilon = 1e-9);
        assert_relative_eq!(next.soc, 0.495_166_666_7, epsilon = 1e-9);
        assert!(!next.charging);
        assert_eq!(next.battery_mv, 3594);
    }

    #[test]
    fn full_battery_stops_charging() {
        let p = PowerState::new(1.0, 2000.0);
        let next = power_step(&p, false, 900.0, 60.0, &PowerParams::default());
        assert_eq!(next.soc, 1.0);
        assert!(!next.charging);
        assert_eq!(next.battery_mv, 4200);
    }

    #[test]
    fn surplus_charges() {
        let p = PowerState::new(0.3, 2000.0);
        let next = power_step(&p, false, 400.0, 60.0, &PowerParams::default());
        assert!(next.charging);
        assert!(next.soc > 0.3);
    }

    #[test]
    fn charge_limit_caps_input() {
        let p = PowerState::new(0.3, 2000.0);
        let params = PowerParams::default();
        let a = power_step(&p, false, 1000.0, 600.0, &params);
        let b = power_step(&p, false, 5000.0, 600.0, &params);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_step_is_identity() {
        let p = PowerState {
            soc: 0.42,
            capacity_mah: 1500.0,
            charging: true,
            battery_mv: battery_mv(0.42),
        };
        assert_eq!(power_step(&p, true, 0.0, 0.0, &PowerParams::default()), p);
    }

    #[test]
    fn solar_shape() {
        let s = SolarParams::default();
        assert_relative_eq!(solar_at(21_600.0, &s).current_ma, 800.0, epsilon = 1e-9);
        assert_eq!(solar_at(21_600.0, &s).voltage_mv, 12_000);
        assert_eq!(solar_at(0.0, &s).current_ma, 0.0);
        assert_eq!(solar_at(64_800.0, &s).current_ma, 0.0);
    }

    proptest! {
        #[test]
        fn soc_and_voltage_stay_in_range(
            soc in 0.0f64..=1.0,
            steps in proptest::collection::vec((0.0f64..3000.0, any::<bool>(), 0.0f64..7200.0), 1..50),
        ) {
            let params = PowerParams::default();
            let mut p = PowerState::new(soc, 500.0);
            for (solar, pump, dt) in steps {
                p = power_step(&p, pump, solar, dt, &params);
                prop_assert!((0.0..=1.0).contains(&p.soc));
                prop_assert!((3000..=4200).contains(&p.battery_mv));
                prop_assert!(!p.charging || p.soc < 1.0);
            }
        }
    }
}

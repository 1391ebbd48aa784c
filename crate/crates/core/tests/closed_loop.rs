use swimps_core::device::{power_step, solar_at, PowerState};
use swimps_core::scenario::{run_in_process, RunOptions, ScenarioConfig, TraceSample};

fn week() -> (ScenarioConfig, Vec<TraceSample>) {
    let cfg = ScenarioConfig::default();
    let (out, _) = run_in_process(&cfg, None, RunOptions::default()).unwrap();
    (cfg, out.trace)
}

#[test]
fn transitions_follow_thresholds() {
    let (cfg, trace) = week();
    let dev = cfg.devices[0];
    let mut prev = false;
    let mut transitions = 0;
    let mut last_switch: Option<u64> = None;
    for s in &trace {
        if s.pump_on != prev {
            let m = s
                .reading
                .expect("pump only switches on a sample")
                .moisture_cpct;
            if s.pump_on {
                assert!(m < dev.low_threshold, "on at {m} t={}", s.t_s);
            } else {
                assert!(m >= dev.high_threshold, "off at {m} t={}", s.t_s);
            }
            if let Some(t) = last_switch {
                assert!(s.t_s - t > cfg.time_step_s, "chatter at t={}", s.t_s);
            }
            last_switch = Some(s.t_s);
            transitions += 1;
        }
        prev = s.pump_on;
    }
    assert!(transitions >= 4, "only {transitions} transitions in a week");
}

#[test]
fn control_holds_moisture_near_low() {
    let (cfg, trace) = week();
    let floor = f64::from(cfg.devices[0].low_threshold) / 100.0 - 2.0;
    let first_off = trace
        .windows(2)
        .position(|w| w[0].pump_on && !w[1].pump_on)
        .expect("a full pump cycle");
    let min = trace[first_off..]
        .iter()
        .map(|s| s.moisture)
        .fold(f64::INFINITY, f64::min);
    assert!(min >= floor, "min {min} below {floor}");
}

#[test]
fn no_control_dries_out() {
    let cfg = ScenarioConfig {
        control_enabled: false,
        ..ScenarioConfig::default()
    };
    let (out, _) = run_in_process(&cfg, None, RunOptions::default()).unwrap();
    let low = f64::from(cfg.devices[0].low_threshold) / 100.0;
    assert!(out.trace.iter().any(|s| s.moisture < low));
    assert!(out.trace.last().unwrap().moisture < cfg.initial_moisture);
}

#[test]
fn soc_matches_reintegration() {
    let (cfg, trace) = week();
    let dt_h = cfg.time_step_s as f64 / 3600.0;
    let solar = cfg.power.solar();
    let p = cfg.power.params();
    let mut soc = cfg.power.initial_soc;
    for s in &trace {
        let i_solar = solar_at(s.t_s as f64, &solar).current_ma;
        assert_eq!(i_solar, s.solar_ma);
        let load = p.mcu_ma + if s.pump_during { p.pump_ma } else { 0.0 };
        let net = i_solar.min(p.charge_limit_ma) - load;
        soc = (soc + net * dt_h / cfg.power.capacity_mah).clamp(0.0, 1.0);
        assert_eq!(s.soc, soc, "t={}", s.t_s);
    }
}

#[test]
fn soc_stays_in_unit_interval() {
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};
    let params = ScenarioConfig::default().power.params();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p = PowerState::new(0.5, 500.0);
    for _ in 0..100_000 {
        let pump = rng.next_u32() & 1 == 1;
        let solar = f64::from(rng.next_u32() % 2000);
        let dt = f64::from(rng.next_u32() % 3600);
        p = power_step(&p, pump, solar, dt, &params);
        assert!((0.0..=1.0).contains(&p.soc));
    }
}

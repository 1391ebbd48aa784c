use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::device::{solar_at, Device, DeviceEvent, PowerState, SensorNoise, SensorReading};
use crate::env::{et_rate, step_soil, weather_at, SoilState};
use crate::gateway::{CommandStatus, Gateway, StorageError, LOG_FILE, REGISTRY_FILE};
use crate::protocol::{encode_frame, OverrideMode, HEADER_LEN};

use super::config::ScenarioConfig;
use super::metrics::{emit_metrics, Metrics, MetricsAccumulator};
use super::port::{GatewayPort, InProcessPort, PortError};

const SENSOR_STREAM_BASE: u64 = 0x5345_4e53_0000_0000;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Sleep between ticks so that simulated time advances at
    /// `realtime_speedup` × wall time.
    pub realtime: bool,
}

/// One device at the end of one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub t_s: u64,
    pub device_id: u32,
    /// Soil moisture after the step, percent.
    pub moisture: f64,
    /// Pump state during the step that just ended.
    pub pump_during: bool,
    /// Pump state after this tick's control step.
    pub pump_on: bool,
    pub low_latch: bool,
    pub soc: f64,
    pub solar_ma: f64,
    pub reading: Option<SensorReading>,
    pub events: Vec<DeviceEvent>,
    /// Set when a telemetry frame was sent and accepted this tick.
    pub accepted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandResult {
    pub at_s: u64,
    pub device_id: u32,
    pub outcome: Result<CommandStatus, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceSample>,
    pub commands: Vec<CommandResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Config(#[from] super::config::ScenarioError),
    #[error("gateway: {0}")]
    Port(#[from] PortError),
    #[error("storage: {0}")]
    Storage(#[from] StorageError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

fn build_devices(cfg: &ScenarioConfig) -> Vec<Device> {
    cfg.devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut dc = *d;
            if !cfg.control_enabled {
                dc.mode = OverrideMode::ForceOff;
            }
            let noise = (cfg.sensor.moisture_noise_cpct > 0.0).then(|| {
                SensorNoise::new(
                    cfg.seed,
                    SENSOR_STREAM_BASE + i as u64,
                    cfg.sensor.moisture_noise_cpct,
                )
            });
            Device::new(
                dc,
                PowerState::new(cfg.power.initial_soc, cfg.power.capacity_mah),
                cfg.power.params(),
                noise,
            )
        })
        .collect()
}

/// Advance the closed loop for the whole scenario.
///
/// Each tick runs, per device and in device order: weather, soil, sample,
/// control, power, telemetry, ingest (alerts are evaluated during ingest).
/// Scheduled commands due in the tick are dispatched after all devices.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    port: &mut dyn GatewayPort,
    opts: RunOptions,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let env = cfg.env_params();
    let solar_params = cfg.power.solar();
    let dt_s = cfg.time_step_s;
    let dt_min = dt_s as f64 / 60.0;
    let ms_at = |t_s: u64| cfg.start_unix_ms + t_s * 1000;

    let mut devices = build_devices(cfg);
    for d in &devices {
        port.register(d.config(), d.mailbox(), ms_at(0))?;
    }
    let mut soils = vec![SoilState::new(cfg.initial_moisture); devices.len()];
    let mut next_sample: Vec<u64> = devices
        .iter()
        .map(|d| u64::from(d.config().sample_interval_s))
        .collect();
    let mut commands: Vec<_> = cfg.commands.clone();
    commands.sort_by_key(|c| c.at_s);
    let mut commands = commands.into_iter().peekable();

    let mut acc = MetricsAccumulator::default();
    let mut trace = Vec::with_capacity(cfg.steps() as usize * devices.len());
    let mut results = Vec::new();
    let mut frames_sent = 0u64;
    let pace = Duration::from_secs_f64(dt_s as f64 / cfg.realtime_speedup);

    for k in 1..=cfg.steps() {
        let t_s = k * dt_s;
        let now_ms = ms_at(t_s);
        let weather = weather_at(t_s as f64, &env);
        let rate = et_rate(&weather, &env);
        let solar = solar_at(t_s as f64, &solar_params);

        for (i, dev) in devices.iter_mut().enumerate() {
            let pump_during = dev.state().pump_on;
            soils[i] = step_soil(soils[i], rate, pump_during, dt_min, &env);
            acc.record(soils[i].moisture, pump_during, env.irr_rate * dt_min);

            let mut reading = None;
            let mut events = Vec::new();
            if t_s >= next_sample[i] {
                let interval = u64::from(dev.config().sample_interval_s);
                while next_sample[i] <= t_s {
                    next_sample[i] += interval;
                }
                let r = dev.sample(&soils[i], &weather, now_ms);
                events = dev.control(&r);
                reading = Some(r);
            }
            dev.power(pump_during, solar.current_ma, dt_s as f64);

            let mut accepted = None;
            if let Some(r) = reading {
                let frame = dev.telemetry(&r, solar.voltage_mv);
                let mut bytes = encode_frame(&frame).expect("telemetry encodes");
                frames_sent += 1;
                let every = u64::from(cfg.fault.bit_flip_every);
                if every > 0 && frames_sent.is_multiple_of(every) {
                    // stay inside the payload so stream framing survives
                    let bit = (frames_sent / every) as usize % 88;
                    bytes[HEADER_LEN + bit / 8] ^= 1 << (bit % 8);
                }
                accepted = Some(port.uplink(dev.id(), &bytes, now_ms)?);
            }
            let st = dev.state();
            trace.push(TraceSample {
                t_s,
                device_id: dev.id(),
                moisture: soils[i].moisture,
                pump_during,
                pump_on: st.pump_on,
                low_latch: st.low_latch,
                soc: st.power.soc,
                solar_ma: solar.current_ma,
                reading,
                events,
                accepted,
            });
        }

        while let Some(c) = commands.next_if(|c| c.at_s <= t_s) {
            let outcome = port
                .command(c.device_id, c.command, now_ms)
                .map_err(|e| e.0);
            results.push(CommandResult {
                at_s: t_s,
                device_id: c.device_id,
                outcome,
            });
        }

        if opts.realtime {
            std::thread::sleep(pace);
        }
    }

    let summary = port.summary()?;
    let final_soc = devices.iter().map(|d| d.state().power.soc).sum::<f64>() / devices.len() as f64;
    let metrics = acc.finish(
        summary.notifications,
        final_soc,
        frames_sent,
        summary.telemetry_accepted,
        summary.frames_rejected,
    );
    Ok(RunOutput {
        metrics,
        trace,
        commands: results,
    })
}

/// Clear a previous run's gateway files so a run starts a fresh deployment.
pub fn prepare_out_dir(out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    for name in [LOG_FILE, REGISTRY_FILE] {
        match std::fs::remove_file(out.join(name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e),
            _ => {}
        }
    }
    Ok(())
}

/// Run with an in-process gateway. With `out`, the gateway log and
/// registry live there and `metrics.json` is written next to them.
pub fn run_in_process(
    cfg: &ScenarioConfig,
    out: Option<&Path>,
    opts: RunOptions,
) -> Result<(RunOutput, Gateway), RunError> {
    let gw_opts = cfg.gateway_options();
    let gateway = match out {
        Some(dir) => {
            prepare_out_dir(dir)?;
            Gateway::open(dir, gw_opts)?
        }
        None => Gateway::in_memory(gw_opts),
    };
    let mut port = InProcessPort::new(gateway);
    let output = run_scenario(cfg, &mut port, opts)?;
    if let Some(dir) = out {
        emit_metrics(&output.metrics, dir)?;
    }
    Ok((output, port.into_gateway()))
}

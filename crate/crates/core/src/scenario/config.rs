use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{DeviceConfig, PowerParams, SolarParams};
use crate::env::EnvParams;
use crate::gateway::{AlertConfig, GatewayOptions};
use crate::protocol::CommandPayload;

/// The documented default scenario; omitted fields take these values.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Standard deviation of the soil probe noise; 0 disables it.
    pub moisture_noise_cpct: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            moisture_noise_cpct: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub capacity_mah: f64,
    pub initial_soc: f64,
    pub mcu_ma: f64,
    pub pump_ma: f64,
    pub charge_limit_ma: f64,
    pub solar_peak_ma: f64,
    pub panel_mv: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let p = PowerParams::default();
        let s = SolarParams::default();
        Self {
            capacity_mah: 2000.0,
            initial_soc: 0.8,
            mcu_ma: p.mcu_ma,
            pump_ma: p.pump_ma,
            charge_limit_ma: p.charge_limit_ma,
            solar_peak_ma: s.peak_ma,
            panel_mv: s.panel_mv,
        }
    }
}

impl PowerConfig {
    pub fn params(&self) -> PowerParams {
        PowerParams {
            mcu_ma: self.mcu_ma,
            pump_ma: self.pump_ma,
            charge_limit_ma: self.charge_limit_ma,
        }
    }

    pub fn solar(&self) -> SolarParams {
        SolarParams {
            peak_ma: self.solar_peak_ma,
            panel_mv: self.panel_mv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transport {
    /// Gateway lives in the runner's own address space.
    #[default]
    InProcess,
    /// Gateway service on a loopback socket, started by the runner.
    Loopback,
    /// An already running `swimps serve`: `addr` is its device listener,
    /// `http` its API (needed for scripted commands).
    Remote {
        addr: String,
        #[serde(default)]
        http: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    /// Flip one payload bit in every n-th telemetry frame; 0 disables.
    pub bit_flip_every: u32,
}

/// A command the gateway sends at a fixed scenario time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub at_s: u64,
    pub device_id: u32,
    #[serde(flatten)]
    pub command: CommandPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_s: u64,
    pub time_step_s: u64,
    pub seed: u64,
    /// Wall-clock time of scenario second 0 (06:00 local).
    pub start_unix_ms: u64,
    /// Initial soil moisture, percent.
    pub initial_moisture: f64,
    /// When false every device starts in FORCE_OFF.
    pub control_enabled: bool,
    pub env: EnvParams,
    pub sensor: SensorConfig,
    pub power: PowerConfig,
    pub alerts: AlertConfig,
    pub devices: Vec<DeviceConfig>,
    pub transport: Transport,
    pub fsync: bool,
    pub fault: FaultConfig,
    pub commands: Vec<ScheduledCommand>,
    /// Simulated seconds per wall second under `--realtime`.
    pub realtime_speedup: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_s: 7 * 86_400,
            time_step_s: 60,
            seed: 42,
            start_unix_ms: 1_704_088_800_000,
            initial_moisture: 45.0,
            control_enabled: true,
            env: EnvParams::default(),
            sensor: SensorConfig::default(),
            power: PowerConfig::default(),
            alerts: AlertConfig::default(),
            devices: vec![DeviceConfig::new(1)],
            transport: Transport::InProcess,
            fsync: false,
            fault: FaultConfig::default(),
            commands: Vec::new(),
            realtime_speedup: 60.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: scenario file not found", .0.display())]
    NotFound(PathBuf),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, std::io::Error),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_s == 0 {
            return Err(invalid("duration_s", "must be > 0"));
        }
        if self.time_step_s == 0 {
            return Err(invalid("time_step_s", "must be > 0"));
        }
        if !(0.0..=100.0).contains(&self.initial_moisture) {
            return Err(invalid("initial_moisture", "must be within [0, 100]"));
        }
        self.env.validate().map_err(|e| match e {
            crate::env::EnvParamsError::Invalid { field, reason } => {
                invalid(format!("env.{field}"), reason)
            }
        })?;
        if !(self.sensor.moisture_noise_cpct >= 0.0 && self.sensor.moisture_noise_cpct.is_finite())
        {
            return Err(invalid("sensor.moisture_noise_cpct", "must be >= 0"));
        }
        let p = &self.power;
        if !(p.capacity_mah > 0.0 && p.capacity_mah.is_finite()) {
            return Err(invalid("power.capacity_mah", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&p.initial_soc) {
            return Err(invalid("power.initial_soc", "must be within [0, 1]"));
        }
        for (name, v) in [
            ("power.mcu_ma", p.mcu_ma),
            ("power.pump_ma", p.pump_ma),
            ("power.charge_limit_ma", p.charge_limit_ma),
            ("power.solar_peak_ma", p.solar_peak_ma),
            ("power.panel_mv", p.panel_mv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be >= 0"));
            }
        }
        if self.devices.is_empty() {
            return Err(invalid("devices", "at least one device is required"));
        }
        let mut ids = HashSet::new();
        for (i, d) in self.devices.iter().enumerate() {
            d.validate()
                .map_err(|(field, reason)| invalid(format!("devices[{i}].{field}"), reason))?;
            if !ids.insert(d.device_id) {
                return Err(invalid(
                    format!("devices[{i}].device_id"),
                    "duplicate device id",
                ));
            }
            self.alerts
                .validate_for(d)
                .map_err(|reason| invalid("alerts.clear_cpct", reason))?;
        }
        for (i, c) in self.commands.iter().enumerate() {
            if !ids.contains(&c.device_id) {
                return Err(invalid(
                    format!("commands[{i}].device_id"),
                    "no such device",
                ));
            }
            c.command
                .validate()
                .map_err(|reason| invalid(format!("commands[{i}]"), reason))?;
        }
        if !(self.realtime_speedup > 0.0 && self.realtime_speedup.is_finite()) {
            return Err(invalid("realtime_speedup", "must be > 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.duration_s.div_ceil(self.time_step_s)
    }

    /// Environment parameters with the scenario seed applied.
    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            seed: self.seed,
            ..self.env
        }
    }

    pub fn gateway_options(&self) -> GatewayOptions {
        GatewayOptions {
            fsync: self.fsync,
            queue_offline: false,
            alerts: self.alerts,
        }
    }
}

/// Parse and validate scenario JSON. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ScenarioError::NotFound(path.to_path_buf())
        } else {
            ScenarioError::Io(path.to_path_buf(), e)
        }
    })?;
    parse_scenario(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::OverrideMode;

    #[test]
    fn default_file_matches_default_impl() {
        let cfg = parse_scenario(DEFAULT_SCENARIO, "default.json").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.steps(), 10_080);
    }

    #[test]
    fn omitted_fields_take_defaults() {
        let cfg = parse_scenario(r#"{"seed": 7, "devices": [{"device_id": 4}]}"#, "x").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.devices[0], DeviceConfig::new(4));
        assert_eq!(cfg.devices[0].mode, OverrideMode::Auto);
        assert_eq!(cfg.env, EnvParams::default());
    }

    #[test]
    fn inverted_thresholds_name_the_field() {
        let err = parse_scenario(
            r#"{"devices": [{"device_id": 1, "low_threshold": 3600, "high_threshold": 3500}]}"#,
            "x",
        )
        .unwrap_err();
        match err {
            ScenarioError::Invalid { field, .. } => assert_eq!(field, "devices[0].low_threshold"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = parse_scenario("{\n  \"seed\": 1,\n  \"bogus\": 2\n}", "s.json").unwrap_err();
        match err {
            ScenarioError::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "s.json");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = load_scenario(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(matches!(err, ScenarioError::NotFound(_)));
    }

    #[test]
    fn other_invariants() {
        for (text, field) in [
            (r#"{"duration_s": 0}"#, "duration_s"),
            (r#"{"time_step_s": 0}"#, "time_step_s"),
            (r#"{"devices": []}"#, "devices"),
            (r#"{"env": {"rh_mean": 95}}"#, "env.rh_mean"),
            (r#"{"power": {"initial_soc": 1.5}}"#, "power.initial_soc"),
            (r#"{"alerts": {"clear_cpct": 2000}}"#, "alerts.clear_cpct"),
            (
                r#"{"devices": [{"device_id": 1}, {"device_id": 1}]}"#,
                "devices[1].device_id",
            ),
            (
                r#"{"commands": [{"at_s": 5, "device_id": 9, "cmd": "pump_override", "mode": "FORCE_ON"}]}"#,
                "commands[0].device_id",
            ),
        ] {
            match parse_scenario(text, "x") {
                Err(ScenarioError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn transport_modes_parse() {
        let cfg = parse_scenario(r#"{"transport": {"mode": "loopback"}}"#, "x").unwrap();
        assert_eq!(cfg.transport, Transport::Loopback);
        let cfg = parse_scenario(
            r#"{"transport": {"mode": "remote", "addr": "127.0.0.1:7878"}}"#,
            "x",
        )
        .unwrap();
        assert_eq!(
            cfg.transport,
            Transport::Remote {
                addr: "127.0.0.1:7878".into(),
                http: None,
            }
        );
    }
}

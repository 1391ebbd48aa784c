//! Deterministic closed-loop runs: environment, devices and gateway.

mod config;
mod metrics;
mod port;
mod runner;

pub use config::{
    load_scenario, parse_scenario, FaultConfig, PowerConfig, ScenarioConfig, ScenarioError,
    ScheduledCommand, SensorConfig, Transport, DEFAULT_SCENARIO,
};
pub use metrics::{emit_metrics, Metrics, MetricsAccumulator, METRICS_FILE};
pub use port::{GatewayPort, GatewaySummary, InProcessPort, PortError};
pub use runner::{
    prepare_out_dir, run_in_process, run_scenario, CommandResult, RunError, RunOptions, RunOutput,
    TraceSample,
};

//! Browser bindings for the simulator, the survey scale and the frame codec.
//!
//! Each export takes plain values and returns a JSON string; the pure
//! functions behind them are what the native tests exercise.

use serde::Serialize;
use swimps_core::protocol::{decode_frame, DecodeError, Payload};
use swimps_core::scenario::{run_in_process, Metrics, RunOptions, ScenarioConfig};
use swimps_core::survey::{score_table, Score};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub days: u32,
    pub seed: u32,
    pub low_pct: f64,
    pub high_pct: f64,
    pub control: bool,
}

#[derive(Serialize)]
struct SimResult {
    step_s: u64,
    low_pct: f64,
    high_pct: f64,
    moisture: Vec<f64>,
    pump: Vec<u8>,
    soc: Vec<f64>,
    metrics: Metrics,
}

fn to_cpct(pct: f64) -> Result<u16, String> {
    if (0.0..=100.0).contains(&pct) {
        Ok((pct * 100.0).round() as u16)
    } else {
        Err(format!("{pct} is not a percentage"))
    }
}

pub fn simulate_json(p: SimParams) -> Result<String, String> {
    if !(1..=30).contains(&p.days) {
        return Err("days must be 1..=30".into());
    }
    let mut cfg = ScenarioConfig {
        duration_s: u64::from(p.days) * 86_400,
        seed: u64::from(p.seed),
        control_enabled: p.control,
        ..ScenarioConfig::default()
    };
    cfg.devices[0].low_threshold = to_cpct(p.low_pct)?;
    cfg.devices[0].high_threshold = to_cpct(p.high_pct)?;
    let (out, _) = run_in_process(&cfg, None, RunOptions::default()).map_err(|e| e.to_string())?;
    let result = SimResult {
        step_s: cfg.time_step_s,
        low_pct: p.low_pct,
        high_pct: p.high_pct,
        moisture: out.trace.iter().map(|s| s.moisture).collect(),
        pump: out.trace.iter().map(|s| u8::from(s.pump_on)).collect(),
        soc: out.trace.iter().map(|s| s.soc).collect(),
        metrics: out.metrics,
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

/// Means as text, separated by commas or whitespace, in characteristic
/// order.
pub fn score_means_json(text: &str) -> Result<String, String> {
    const NAMES: [&str; 8] = [
        "Functional Suitability",
        "Performance Efficiency",
        "Compatibility",
        "Usability",
        "Reliability",
        "Security",
        "Maintainability",
        "Portability",
    ];
    let means = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
            Score::from_f64(v).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    if means.len() != NAMES.len() {
        return Err(format!("need {} means, got {}", NAMES.len(), means.len()));
    }
    let rows: Vec<(String, Score)> = NAMES.iter().map(|n| n.to_string()).zip(means).collect();
    let table = score_table(&rows).map_err(|e| e.to_string())?;
    serde_json::to_string(&table).map_err(|e| e.to_string())
}

#[derive(Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
enum Decoded {
    Ok {
        msg_type: &'static str,
        device_id: u32,
        seq: u32,
        timestamp_ms: u64,
        payload: serde_json::Value,
    },
    Error {
        kind: &'static str,
        message: String,
    },
}

pub fn decode_hex_json(hex: &str) -> Result<String, String> {
    let clean: String = hex.chars().filter(|c| !c.is_whitespace()).collect();
    if !clean.len().is_multiple_of(2) {
        return Err("odd number of hex digits".into());
    }
    let bytes = (0..clean.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&clean[i..i + 2], 16))
        .collect::<Result<Vec<u8>, _>>()
        .map_err(|_| "not hex".to_string())?;
    let out = match decode_frame(&bytes) {
        Ok(f) => {
            let (msg_type, payload) = match f.payload {
                Payload::Telemetry(t) => ("telemetry", serde_json::to_value(t)),
                Payload::Command(c) => ("command", serde_json::to_value(c)),
                Payload::Ack(a) => ("ack", serde_json::to_value(a)),
            };
            Decoded::Ok {
                msg_type,
                device_id: f.device_id,
                seq: f.seq,
                timestamp_ms: f.timestamp_ms,
                payload: payload.map_err(|e| e.to_string())?,
            }
        }
        Err(e) => Decoded::Error {
            kind: DecodeError::kind(&e),
            message: e.to_string(),
        },
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Run the closed loop; returns per-step traces and the run metrics.
#[wasm_bindgen]
pub fn simulate(
    days: u32,
    seed: u32,
    low_pct: f64,
    high_pct: f64,
    control: bool,
) -> Result<String, JsValue> {
    simulate_json(SimParams {
        days,
        seed,
        low_pct,
        high_pct,
        control,
    })
    .map_err(|e| JsValue::from_str(&e))
}

/// Map eight characteristic means to the five-band scale.
#[wasm_bindgen]
pub fn score_means(text: &str) -> Result<String, JsValue> {
    score_means_json(text).map_err(|e| JsValue::from_str(&e))
}

/// Decode one frame given as hex; decode failures are reported in the
/// result, not thrown.
#[wasm_bindgen]
pub fn decode_hex(hex: &str) -> Result<String, JsValue> {
    decode_hex_json(hex).map_err(|e| JsValue::from_str(&e))
}

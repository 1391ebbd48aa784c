use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use swimps::client::request;
use swimps_core::gateway::TimelineEntry;
use swimps_core::scenario::{Metrics, DEFAULT_SCENARIO};

const BIN: &str = env!("CARGO_BIN_EXE_swimps");

fn scenario(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(DEFAULT_SCENARIO).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn swimps(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn score_prints_table_and_rejects_bad_ratings() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/table1.csv");
    let o = swimps(&["score", "--input", fixture]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("Usability                  4.13  Very Good"),
        "{text}"
    );
    assert!(
        text.ends_with("Overall Weighted Mean      4.32  Excellent\n"),
        "{text}"
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "A1,A2\nX,X\n4,6\n").unwrap();
    let o = swimps(&["score", "--input", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("\"6\""), "{err}");
}

#[test]
fn run_overrides_and_invalid_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.json", |_| {});
    let out = dir.path().join("out");
    let o = swimps(&[
        "run",
        "--scenario",
        &path,
        "--duration",
        "3600",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Metrics =
        serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m.frames_sent, 60);
    let log = std::fs::read_to_string(out.join("gateway.log")).unwrap();
    assert_eq!(log.lines().count(), 60);

    // a second run into the same directory starts over
    let o = swimps(&[
        "run",
        "--scenario",
        &path,
        "--duration",
        "600",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let log = std::fs::read_to_string(out.join("gateway.log")).unwrap();
    assert_eq!(log.lines().count(), 10);

    let bad = scenario(dir.path(), "bad.json", |v| {
        v["devices"][0]["low_threshold"] = 4000.into();
    });
    let o = swimps(&["run", "--scenario", &bad, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("devices[0].low_threshold"), "{err}");

    let o = swimps(&["run", "--scenario", "/nonexistent.json"]);
    assert!(!o.status.success());
}

#[test]
fn loopback_run_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let edit = |mode: &str| {
        let mode = mode.to_string();
        move |v: &mut serde_json::Value| {
            v["duration_s"] = 86_400.into();
            v["fault"]["bit_flip_every"] = 25.into();
            v["commands"] = serde_json::json!([
                {"at_s": 7200, "device_id": 1, "cmd": "pump_override", "mode": "FORCE_ON"},
                {"at_s": 9000, "device_id": 1, "cmd": "pump_override", "mode": "AUTO"},
                {"at_s": 9000, "device_id": 1, "cmd": "set_thresholds", "low_cpct": 3200, "high_cpct": 3800}
            ]);
            v["transport"] = serde_json::json!({"mode": mode});
        }
    };
    let a = scenario(dir.path(), "a.json", edit("in_process"));
    let b = scenario(dir.path(), "b.json", edit("loopback"));
    let (oa, ob) = (dir.path().join("a"), dir.path().join("b"));
    for (s, o) in [(&a, &oa), (&b, &ob)] {
        let r = swimps(&["run", "--scenario", s, "--out", o.to_str().unwrap()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["gateway.log", "metrics.json", "registry.json"] {
        assert_eq!(
            std::fs::read(oa.join(f)).unwrap(),
            std::fs::read(ob.join(f)).unwrap(),
            "{f}"
        );
    }
    let m: Metrics =
        serde_json::from_slice(&std::fs::read(oa.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m.frames_rejected, 1440 / 25);
    let log = std::fs::read_to_string(oa.join("gateway.log")).unwrap();
    assert_eq!(log.matches(r#""kind":"command""#).count(), 3);
}

struct Serve(Child);

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn remote_run_against_serve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--listen",
            "127.0.0.1:0",
            "--devices",
            "127.0.0.1:0",
            "--fsync",
            "off",
            "--data",
        ])
        .arg(&data)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _serve = Serve(child);
    let (http, devices) = line
        .trim()
        .strip_prefix("listening http=")
        .and_then(|r| r.split_once(" devices="))
        .map(|(h, d)| (h.to_string(), d.to_string()))
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"));

    let path = scenario(dir.path(), "remote.json", |v| {
        v["duration_s"] = 1800.into();
        v["commands"] = serde_json::json!([
            {"at_s": 600, "device_id": 1, "cmd": "pump_override", "mode": "FORCE_ON"}
        ]);
        v["transport"] = serde_json::json!({"mode": "remote", "addr": devices, "http": http});
    });
    let out = dir.path().join("out");
    let r = swimps(&["run", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m: Metrics =
        serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(
        (m.frames_sent, m.frames_accepted, m.frames_rejected),
        (30, 30, 0)
    );

    let entries: Vec<TimelineEntry> = request(&http, "GET", "/devices/1/timeline", None)
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(entries.len(), 31);
    let cmd = entries
        .iter()
        .position(|e| e.kind().as_str() == "command")
        .unwrap();
    // the override shows up in the next telemetry's pump flag
    let next: serde_json::Value = serde_json::to_value(entries[cmd + 1]).unwrap();
    assert_eq!(next["body"]["flags"].as_u64().unwrap() & 1, 1);
    assert!(data.join("gateway.log").exists());
}

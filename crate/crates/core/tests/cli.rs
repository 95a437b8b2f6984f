mod common;

use common::scenario_path;
use std::path::Path;
use std::process::{Command, Output};

fn freewing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freewing")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=').or_else(|| l.split_once(char::is_whitespace))?;
            (k.trim() == key).then(|| v.trim().parse().ok()).flatten()
        })
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

fn short_hover(dir: &Path, duration: f64, extra: &str) -> String {
    let text = std::fs::read_to_string(scenario_path("hover.cfg")).unwrap();
    let text = text.replace("duration = 60.0", &format!("duration = {duration}")) + extra;
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_outputs_and_summary_reports_overshoot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_hover(dir.path(), 15.0, "");
    let out = dir.path().join("run");
    let o = freewing(&["simulate", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for file in ["trajectory.csv", "sensors.csv", "summary.txt"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let written = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(value(&written, "controller_ticks"), 7500.0);

    let o = freewing(&["summary", out.join("trajectory.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let overshoot = value(&stdout(&o), "overshoot_pct");
    assert!((overshoot - 10.0).abs() < 5.0, "overshoot {overshoot}");
    assert_eq!(overshoot, value(&written, "overshoot_pct"));
}

#[test]
fn pendulum_validate_prints_small_deviation() {
    let o = freewing(&["pendulum-validate", "--theta0-deg", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dev = value(&stdout(&o), "max_deviation_rad");
    assert!(dev < 1e-3, "{dev}");
}

#[test]
fn unknown_key_is_a_config_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_hover(dir.path(), 1.0, "bogus_gain = 4.0\n");
    let o = freewing(&["simulate", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bogus_gain") && err.contains("line"), "{err}");
}

#[test]
fn invalid_rate_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario_path("hover.cfg")).unwrap().replace("controller_rate = 500.0", "controller_rate = 300.0");
    let path = dir.path().join("rate.cfg");
    std::fs::write(&path, text).unwrap();
    let o = freewing(&["simulate", path.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_config_error() {
    let o = freewing(&["simulate", "/nonexistent/scenario.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runaway_disturbance_exits_with_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_hover(dir.path(), 2.0, "\n[[scenario.disturbances]]\nt = 0.5\nduration = 0.5\nwing_moment = [1e300, 1e300, 1e300]\n");
    let o = freewing(&["simulate", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

//! Command-line behaviour and exit codes.

use std::path::Path;
use std::process::Command;

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_grid-sentinel")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "testbed = \"linear\"\nreplications = 1\nstream_length = 200\ncalibration_ticks = 600\nlevels = [0, 6]\n";

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = cli(&["bench", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let bad = write(dir.path(), "bad.toml", "testbed = \"linear\"\nreplications = 0\n");
    let out = cli(&["calibrate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));

    let unknown = write(dir.path(), "unknown.json", "{\"testbed\": \"mars\"}");
    assert_eq!(cli(&["simulate", "--config", &unknown]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let blocker = write(dir.path(), "blocker", "");
    let out = cli(&["calibrate", "--config", &cfg, "--out", &blocker]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_and_simulate_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out_dir = dir.path().join("out");
    let out = cli(&["calibrate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("calibration.json")).unwrap()).unwrap();
    assert!(cal["detector"]["threshold"].as_f64().unwrap() > 0.0);

    let out = cli(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "5"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(out_dir.join("stream_snr6.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,attacked,z1,"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn help_documents_defaults() {
    let out = cli(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["replications", "calibration_ticks", "neighborhood", "Exit codes"] {
        assert!(text.contains(key), "{key}");
    }
}

//! Report files written from a small end-to-end run.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use grid_sentinel::report::{emit_report, table_row, TABLE_COLUMNS};
use grid_sentinel::{Harness, RunOutput, Scenario, Testbed};

fn small_run() -> &'static RunOutput {
    static OUT: OnceLock<RunOutput> = OnceLock::new();
    OUT.get_or_init(|| {
        let mut s = Scenario::defaults(Testbed::Linear);
        s.replications = 3;
        s.stream_length = 300;
        s.calibration_ticks = 2000;
        s.log_pre_onset = 20;
        Harness::prepare(s).unwrap().run().unwrap()
    })
}

fn names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn metrics_and_table_round_trip() {
    let out = small_run();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(out, dir.path()).unwrap();
    assert_eq!(written.len(), names(dir.path()).len());

    let text = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, serde_json::to_value(&out.metrics).unwrap());

    let mut rdr = csv::Reader::from_path(dir.path().join("table.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TABLE_COLUMNS);
    let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    // one row per SNR level 0..6
    assert_eq!(rows.len(), 7);
    for (row, level) in rows.iter().zip(&out.metrics.levels) {
        assert_eq!(row, &table_row(level));
        let arl: f64 = row[3].parse().unwrap();
        assert_eq!(arl, level.sgl_arl.mean);
    }
    let levels: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(levels, (0..=6).map(f64::from).collect::<Vec<_>>());

    let reps = csv::Reader::from_path(dir.path().join("replications.csv")).unwrap().records().count();
    assert_eq!(reps, out.records.len());
    assert_eq!(reps, 7 * 3);
}

#[test]
fn series_and_plots_for_logged_replications() {
    let out = small_run();
    let dir = tempfile::tempdir().unwrap();
    emit_report(out, dir.path()).unwrap();
    let files = names(dir.path());
    for log in &out.logs {
        assert!(files.contains(&format!("stats_{}.csv", log.label)));
        assert!(files.contains(&format!("plot_{}.svg", log.label)));
        assert!(files.contains(&format!("plot_{}_chi2.svg", log.label)));
        if let Some(onset) = log.onset {
            assert_eq!(log.ticks.first().unwrap().t, onset - 20);
            let svg = std::fs::read_to_string(dir.path().join(format!("plot_{}.svg", log.label))).unwrap();
            assert!(svg.contains(&format!("onset t={onset}")));
        }
    }
    assert_eq!(out.logs.len(), 7);
}

#[test]
fn empty_metrics_write_nothing() {
    let mut out = small_run().clone();
    out.metrics.levels.clear();
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report");
    assert!(emit_report(&out, &target).is_err());
    assert!(!target.exists());
}

#[test]
fn failed_write_removes_earlier_files() {
    let out = small_run();
    let dir = tempfile::tempdir().unwrap();
    // a directory where table.csv should go makes that write fail
    std::fs::create_dir(dir.path().join("table.csv")).unwrap();
    assert!(emit_report(out, dir.path()).is_err());
    assert_eq!(names(dir.path()), BTreeSet::from(["table.csv".to_string()]));
}

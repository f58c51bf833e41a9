//! Report files: `metrics.json`, `table.csv`, `replications.csv`, per-tick
//! `stats_<rep>.csv` series and `plot_<name>.svg` charts.

use std::path::{Path, PathBuf};

use crate::metrics::Confusion;
use crate::runner::{LevelMetrics, RunOutput, SeriesLog};
use crate::svg::Chart;
use crate::BenchError;

pub const TABLE_COLUMNS: [&str; 20] = [
    "level",
    "replications",
    "failures",
    "sgl_arl",
    "sgl_arl_sd",
    "sgl_censored",
    "sgl_arl_uncensored",
    "sgl_accuracy",
    "sgl_precision",
    "sgl_recall",
    "sgl_f",
    "ht_arl",
    "ht_arl_sd",
    "ht_censored",
    "ht_arl_uncensored",
    "ht_accuracy",
    "ht_precision",
    "ht_recall",
    "ht_f",
    "ht_accuracy_own_alarm",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn confusion_cells(c: Option<&Confusion>) -> [String; 4] {
    [
        opt(c.map(|c| c.accuracy)),
        opt(c.and_then(|c| c.macro_precision)),
        opt(c.and_then(|c| c.macro_recall)),
        opt(c.and_then(|c| c.macro_f)),
    ]
}

/// One table row. The `ht_*` columns are the chi-square detector's run
/// length and hypothesis-testing localization at the SGL alarm tick.
pub fn table_row(l: &LevelMetrics) -> Vec<String> {
    let mut row = vec![
        l.level.to_string(),
        l.replications.to_string(),
        l.failures.to_string(),
        l.sgl_arl.mean.to_string(),
        l.sgl_arl.std.to_string(),
        l.sgl_arl.censored.to_string(),
        opt(l.sgl_arl.mean_uncensored),
    ];
    row.extend(confusion_cells(l.sgl_localization.as_ref()));
    row.extend([
        l.chi2_arl.mean.to_string(),
        l.chi2_arl.std.to_string(),
        l.chi2_arl.censored.to_string(),
        opt(l.chi2_arl.mean_uncensored),
    ]);
    row.extend(confusion_cells(l.ht_at_sgl_alarm.as_ref()));
    row.push(opt(l.ht_at_chi2_alarm.as_ref().map(|c| c.accuracy)));
    row
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| BenchError::Runtime(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| BenchError::Runtime(format!("csv: {e}")))
}

fn series_csv(log: &SeriesLog) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &log.ticks {
        w.serialize(t).map_err(|e| BenchError::Runtime(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| BenchError::Runtime(format!("csv: {e}")))
}

fn render(out: &RunOutput) -> Result<Vec<(String, Vec<u8>)>, BenchError> {
    let m = &out.metrics;
    if m.levels.is_empty() || m.levels.iter().any(|l| l.replications == 0) {
        return Err(BenchError::Metrics("nothing to report: no completed replications".into()));
    }
    let mut files = Vec::new();
    let json = serde_json::to_string_pretty(m).map_err(|e| BenchError::Runtime(format!("json: {e}")))?;
    files.push(("metrics.json".to_string(), (json + "\n").into_bytes()));
    files.push(("table.csv".into(), csv_bytes(&TABLE_COLUMNS, m.levels.iter().map(table_row))?));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &out.records {
        w.serialize(r).map_err(|e| BenchError::Runtime(format!("csv: {e}")))?;
    }
    files.push((
        "replications.csv".into(),
        w.into_inner().map_err(|e| BenchError::Runtime(format!("csv: {e}")))?,
    ));
    for log in &out.logs {
        files.push((format!("stats_{}.csv", log.label), series_csv(log)?));
        let threshold = log.ticks.first().map_or(0.0, |t| t.threshold);
        let chi2_threshold = log.ticks.first().map_or(0.0, |t| t.chi2_threshold);
        let onset = log.onset.map(|o| o as f64);
        let sgl = Chart {
            title: &format!("{}: SGL statistic", log.label),
            y_label: "max group L1 norm (normalized)",
            points: log.ticks.iter().map(|t| (t.t as f64, t.stat)).collect(),
            threshold,
            onset,
        };
        files.push((format!("plot_{}.svg", log.label), sgl.render().into_bytes()));
        let chi = Chart {
            title: &format!("{}: chi-square statistic", log.label),
            y_label: "weighted squared residual",
            points: log.ticks.iter().map(|t| (t.t as f64, t.chi2)).collect(),
            threshold: chi2_threshold,
            onset,
        };
        files.push((format!("plot_{}_chi2.svg", log.label), chi.render().into_bytes()));
    }
    Ok(files)
}

/// Writes every report file into `out_dir`, which is created if needed.
/// Everything is rendered in memory first; when a write fails the files
/// already written are removed.
pub fn emit_report(out: &RunOutput, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let files = render(out)?;
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out_dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(BenchError::io(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}

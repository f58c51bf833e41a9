use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grid_sentinel::report::emit_report;
use grid_sentinel::{BenchError, Harness, Scenario};

const CONFIG_HELP: &str = "\
Config file (TOML, or JSON when the name ends in .json). Only `testbed` is required.

Top-level keys and defaults (linear / grid14):
  testbed            \"linear\" | \"grid14\"
  name               \"linear\" / \"grid14\"
  replications       200 / 50
  seed               20240601
  stream_length      5000 / 2000     ticks per replication
  onset              50 / 1000       first attacked tick; in-control runs count from 1
  calibration_ticks  100000 / 2000   attack-free ticks used for calibration
  levels             [0..6] SNR / [0..5] generation-cut level; 0 = no attack
  log_replications   1               replications per level with per-tick logs
  log_pre_onset      200             logged ticks before the onset
  workers            0               0 = all cores
  chi2_significance  0.005
[detector]  alpha 0.005, penalty_scale 0.1, l1_ratio 0.5, tol 1e-6, max_outer 50,
            sgl_tol 1e-8, sgl_max_sweeps 10000, weighting \"unit\";
            lambda1, lambda2, normalization, threshold are calibrated when absent
[linear]    states 20, sensors 30, density 0.2, groups 4, eig_min 0.2, eig_max 0.95,
            process_var 1e-4, sensor_sigma 0.001, connect_threshold 0.5, max_retries 1000
[grid]      sigma_voltage 0.01, sigma_power 0.02, loss_margin 0.03,
            [grid.loads] period 288, amplitude 0.2, ar_coef 0.9, noise 0.03,
            power_factor 0.95, scale 1.0
[network]   case (JSON path, default bundled IEEE 14-bus), loads_csv (t,bus,p,q),
            neighborhood \"incident\" | \"one_hop\" (default incident)

Exit codes: 0 success, 1 config error, 2 runtime error.";

#[derive(Parser)]
#[command(name = "grid-sentinel", version, about = "Covert-attack detection experiments", after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file; see `--help` for keys and defaults.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes replication 0's measurement stream for every level.
    Simulate(Common),
    /// Calibrates the detector and writes calibration.json.
    Calibrate(Common),
    /// Runs replication 0 of every level with full per-tick logs.
    Detect(Common),
    /// Runs every replication and writes the full report.
    Bench(Common),
}

fn load(c: &Common) -> Result<Scenario, BenchError> {
    let mut s = Scenario::load(&c.config)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(w) = c.workers {
        s.workers = w;
    }
    s.validate()?;
    Ok(s)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), BenchError> {
    std::fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, BenchError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| BenchError::Runtime(format!("json: {e}")))
}

fn simulate(c: &Common) -> Result<(), BenchError> {
    let s = load(c)?;
    let mut draft = s.clone();
    // streams do not need thresholds; skip the calibration pass
    draft.detector.lambda1 = Some(0.0);
    draft.detector.lambda2 = Some(0.0);
    draft.detector.normalization = Some(1.0);
    draft.detector.threshold = Some(1.0);
    let h = Harness::prepare(draft)?;
    std::fs::create_dir_all(&c.out).map_err(|e| BenchError::io(&c.out, e))?;
    for &level in &s.levels {
        let ticks = h.simulate(level, 0)?;
        let m = ticks.first().map_or(0, |t| t.2.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string(), "attacked".to_string()];
        header.extend((1..=m).map(|j| format!("z{j}")));
        let rows = std::iter::once(header).chain(ticks.iter().map(|(t, a, z)| {
            let mut row = vec![t.to_string(), a.to_string()];
            row.extend(z.iter().map(|v| v.to_string()));
            row
        }));
        for r in rows {
            w.write_record(&r).map_err(|e| BenchError::Runtime(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Runtime(format!("csv: {e}")))?;
        let path = c.out.join(format!("stream_{}.csv", s.level_label(level)));
        write(&path, bytes)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn calibrate(c: &Common) -> Result<(), BenchError> {
    let h = Harness::prepare(load(c)?)?;
    std::fs::create_dir_all(&c.out).map_err(|e| BenchError::io(&c.out, e))?;
    let path = c.out.join("calibration.json");
    write(&path, json(&h.calibration)?)?;
    println!("{}", path.display());
    Ok(())
}

fn detect(c: &Common) -> Result<(), BenchError> {
    let mut s = load(c)?;
    s.replications = 1;
    s.log_replications = 1;
    let h = Harness::prepare(s)?;
    let out = h.run()?;
    let written = emit_report(&out, &c.out)?;
    for r in &out.records {
        println!(
            "level {}: target {:?}, SGL run length {}{} located {:?}; chi-square run length {}{}",
            r.level,
            r.target,
            r.sgl_run_length,
            if r.sgl_censored { " (censored)" } else { "" },
            r.sgl_location,
            r.chi2_run_length,
            if r.chi2_censored { " (censored)" } else { "" },
        );
    }
    log::info!("wrote {} files to {}", written.len(), c.out.display());
    Ok(())
}

fn bench(c: &Common) -> Result<(), BenchError> {
    let h = Harness::prepare(load(c)?)?;
    let out = h.run()?;
    let written = emit_report(&out, &c.out)?;
    let table = written.iter().find(|p| p.ends_with("table.csv")).expect("table is always written");
    let text = std::fs::read_to_string(table).map_err(|e| BenchError::io(table, e))?;
    print!("{text}");
    log::info!("wrote {} files to {}", written.len(), c.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Calibrate(c) => calibrate(c),
        Command::Detect(c) => detect(c),
        Command::Bench(c) => bench(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

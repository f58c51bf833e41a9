//! Scenario configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use grid_sentinel_core::detector::DetectorConfig;
use grid_sentinel_core::netmodel::Neighborhood;
use grid_sentinel_core::simgrid::GridConfig;
use grid_sentinel_core::simlinear::LinearConfig;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Testbed {
    Linear,
    Grid14,
}

/// Network inputs for the grid14 testbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    /// Case JSON; the bundled IEEE 14-bus case when absent.
    pub case: Option<PathBuf>,
    /// Load CSV (`t,bus,p,q`); synthetic loads when absent.
    pub loads_csv: Option<PathBuf>,
    /// Sensor set `M_i` masked by the attacker and zeroed in the basis.
    pub neighborhood: Neighborhood,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            case: None,
            loads_csv: None,
            neighborhood: Neighborhood::Incident,
        }
    }
}

/// One experiment. Levels are SNR values on the linear testbed and
/// generation-cut levels (1..=5) on grid14; level 0 means no attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub testbed: Testbed,
    pub replications: usize,
    pub seed: u64,
    /// Ticks simulated per replication.
    pub stream_length: usize,
    /// First attacked tick. In-control runs are counted from tick 1.
    pub onset: usize,
    pub calibration_ticks: usize,
    pub levels: Vec<f64>,
    /// Replications per level whose per-tick series is kept for the report.
    pub log_replications: usize,
    /// Ticks before the onset included in logged series.
    pub log_pre_onset: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// False-alarm probability of the chi-square baseline.
    pub chi2_significance: f64,
    pub detector: DetectorConfig,
    pub linear: LinearConfig,
    pub grid: GridConfig,
    pub network: NetworkSettings,
}

// On-disk form: testbed-dependent fields may be left out.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    testbed: Testbed,
    replications: Option<usize>,
    seed: Option<u64>,
    stream_length: Option<usize>,
    onset: Option<usize>,
    calibration_ticks: Option<usize>,
    levels: Option<Vec<f64>>,
    log_replications: Option<usize>,
    log_pre_onset: Option<usize>,
    workers: Option<usize>,
    chi2_significance: Option<f64>,
    #[serde(default)]
    detector: DetectorConfig,
    #[serde(default)]
    linear: LinearConfig,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    network: NetworkSettings,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl Scenario {
    /// Defaults for a testbed: 200 replications over SNR 0..=6 on the linear
    /// testbed, 50 per level over levels 0..=5 on grid14.
    pub fn defaults(testbed: Testbed) -> Self {
        let common = |name: &str, replications, stream_length, onset, calibration_ticks, levels: Vec<f64>| Self {
            name: name.into(),
            testbed,
            replications,
            seed: DEFAULT_SEED,
            stream_length,
            onset,
            calibration_ticks,
            levels,
            log_replications: 1,
            log_pre_onset: 200,
            workers: 0,
            chi2_significance: 0.005,
            detector: DetectorConfig::default(),
            linear: LinearConfig::default(),
            grid: GridConfig::default(),
            network: NetworkSettings::default(),
        };
        match testbed {
            Testbed::Linear => common("linear", 200, 5000, 50, 100_000, (0..=6).map(f64::from).collect()),
            Testbed::Grid14 => common("grid14", 50, 2000, 1000, 2000, (0..=5).map(f64::from).collect()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        Self::resolve(file)
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        Self::resolve(file)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve(f: ScenarioFile) -> Result<Self, BenchError> {
        let d = Self::defaults(f.testbed);
        let s = Self {
            name: f.name.unwrap_or(d.name),
            testbed: f.testbed,
            replications: f.replications.unwrap_or(d.replications),
            seed: f.seed.unwrap_or(d.seed),
            stream_length: f.stream_length.unwrap_or(d.stream_length),
            onset: f.onset.unwrap_or(d.onset),
            calibration_ticks: f.calibration_ticks.unwrap_or(d.calibration_ticks),
            levels: f.levels.unwrap_or(d.levels),
            log_replications: f.log_replications.unwrap_or(d.log_replications),
            log_pre_onset: f.log_pre_onset.unwrap_or(d.log_pre_onset),
            workers: f.workers.unwrap_or(d.workers),
            chi2_significance: f.chi2_significance.unwrap_or(d.chi2_significance),
            detector: f.detector,
            linear: f.linear,
            grid: f.grid,
            network: f.network,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.onset == 0 || self.onset >= self.stream_length {
            return fail(format!(
                "onset {} must lie in 1..{} (the stream length)",
                self.onset, self.stream_length
            ));
        }
        if self.calibration_ticks < 500 {
            return fail(format!("calibration_ticks {} is below 500", self.calibration_ticks));
        }
        if self.levels.is_empty() {
            return fail("levels must not be empty".into());
        }
        for &l in &self.levels {
            let ok = match self.testbed {
                Testbed::Linear => l.is_finite() && l >= 0.0,
                Testbed::Grid14 => l.fract() == 0.0 && (0.0..=5.0).contains(&l),
            };
            if !ok {
                return fail(format!("level {l} is invalid for the {:?} testbed", self.testbed));
            }
        }
        if !(self.chi2_significance > 0.0 && self.chi2_significance < 1.0) {
            return fail(format!("chi2_significance {} outside (0, 1)", self.chi2_significance));
        }
        if !(self.detector.alpha > 0.0 && self.detector.alpha < 1.0) {
            return fail(format!("detector.alpha {} outside (0, 1)", self.detector.alpha));
        }
        Ok(())
    }

    /// File-name label of a level, `snr3` or `level3`.
    pub fn level_label(&self, level: f64) -> String {
        match self.testbed {
            Testbed::Linear => format!("snr{level}"),
            Testbed::Grid14 => format!("level{level}"),
        }
    }
}

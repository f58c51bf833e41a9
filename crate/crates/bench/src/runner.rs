//! Replication management: testbed setup, one-off calibration, and runs to
//! first alarm under common random numbers.

use grid_sentinel_core::attack::beta_from_snr;
use grid_sentinel_core::baselines::{ht_localize, ChiSqConfig};
use grid_sentinel_core::detector::{calibrate, DetectorConfig, GroupSpec, LinearDetector, NonlinearDetector, StepDetector};
use grid_sentinel_core::estimator::{newton_se, LinearModel, NewtonOptions, WlsSolver};
use grid_sentinel_core::netmodel::{neighborhood_sets, AcModel, MeasurementPlan, NetworkCase, StateVector};
use grid_sentinel_core::rng::{derive_seed, rng_seeded};
use grid_sentinel_core::simgrid::{dispatch, synth_loads, DispatchPlan, GridAttack, GridSimulator, LoadProfile};
use grid_sentinel_core::simlinear::{gen_random_system, LinearAttack, LinearSimulator, LinearSystem};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{arl_stats, compute_confusion, ArlStats, Confusion};
use crate::scenario::{Scenario, Testbed};
use crate::BenchError;

// Stream labels for seed derivation.
const SYSTEM: u64 = 1;
const CALIBRATION: u64 = 2;
const LOADS: u64 = 3;
const NOISE: u64 = 100;
const TARGET: u64 = 200;

/// Share of failed replications above which a run is an error.
const MAX_FAILURE_RATE: f64 = 0.05;

enum Bed {
    Linear {
        sys: LinearSystem,
    },
    Grid {
        case: NetworkCase,
        plan: MeasurementPlan,
        loads: LoadProfile,
        dispatch: DispatchPlan,
        x0: DVector<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub detector: DetectorConfig,
    pub lambda_max_median: Option<f64>,
    pub zero_fraction: Option<f64>,
    pub chi2_dof: usize,
    pub chi2_threshold: f64,
}

/// A testbed with frozen thresholds, ready for replications.
pub struct Harness {
    pub scenario: Scenario,
    bed: Bed,
    pub groups: Vec<GroupSpec>,
    pub detector: DetectorConfig,
    pub chi2: ChiSqConfig,
    pub calibration: CalibrationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub t: usize,
    /// SGL statistic and threshold.
    pub stat: f64,
    pub threshold: f64,
    pub chi2: f64,
    pub chi2_threshold: f64,
    pub alarm: bool,
    pub location: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub level: f64,
    pub replication: usize,
    /// Attacked group or bus id.
    pub target: Option<usize>,
    pub sgl_run_length: usize,
    pub sgl_censored: bool,
    pub sgl_location: Option<usize>,
    /// Hypothesis-testing location at the SGL alarm tick.
    pub ht_at_sgl: Option<usize>,
    pub chi2_run_length: usize,
    pub chi2_censored: bool,
    /// Hypothesis-testing location at the chi-square alarm tick.
    pub ht_at_chi2: Option<usize>,
    pub snr: Option<f64>,
}

/// One replication's outcome plus its per-tick series, when logged.
#[derive(Debug, Clone)]
pub struct Replication {
    pub record: ReplicationRecord,
    pub log: Option<Vec<TickLog>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: f64,
    pub attacked: bool,
    pub replications: usize,
    pub failures: usize,
    pub sgl_arl: ArlStats,
    pub sgl_localization: Option<Confusion>,
    /// Chi-square detector, whose alarm triggers hypothesis testing.
    pub chi2_arl: ArlStats,
    pub ht_at_sgl_alarm: Option<Confusion>,
    pub ht_at_chi2_alarm: Option<Confusion>,
}

/// Aggregates written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: Scenario,
    pub calibration: CalibrationSummary,
    pub candidates: Vec<usize>,
    pub levels: Vec<LevelMetrics>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SeriesLog {
    pub label: String,
    pub level: f64,
    pub replication: usize,
    pub onset: Option<usize>,
    pub ticks: Vec<TickLog>,
}

/// Everything a bench run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub records: Vec<ReplicationRecord>,
    pub logs: Vec<SeriesLog>,
}

// Detector plus the plain estimator and model used by the baselines.
enum Engine<'a> {
    Linear {
        det: LinearDetector,
        wls: WlsSolver,
        model: LinearModel,
    },
    Grid {
        det: NonlinearDetector<AcModel<'a>>,
        model: AcModel<'a>,
    },
}

impl Engine<'_> {
    fn det(&mut self) -> &mut dyn StepDetector {
        match self {
            Engine::Linear { det, .. } => det,
            Engine::Grid { det, .. } => det,
        }
    }

    fn plain(&self, z: &DVector<f64>, warm: &DVector<f64>, sigma: &DVector<f64>) -> Result<(f64, DVector<f64>), BenchError> {
        match self {
            Engine::Linear { wls, .. } => {
                let r = wls.solve(z);
                Ok((r.chi2, r.state))
            }
            Engine::Grid { model, .. } => {
                let r = newton_se(model, z, sigma, warm, NewtonOptions::default())?;
                Ok((r.chi2, r.state))
            }
        }
    }

    fn ht(&self, z: &DVector<f64>, x: &DVector<f64>, sigma: &DVector<f64>, groups: &[GroupSpec]) -> Option<usize> {
        let out = match self {
            Engine::Linear { model, .. } => ht_localize(model, z, sigma, groups, x, NewtonOptions::default()),
            Engine::Grid { model, .. } => ht_localize(model, z, sigma, groups, x, NewtonOptions::default()),
        };
        match out {
            Ok(o) => Some(o.location),
            Err(e) => {
                log::warn!("hypothesis testing gave no location: {e}");
                None
            }
        }
    }
}

type Stream<'a> = Box<dyn Iterator<Item = Result<(usize, DVector<f64>), BenchError>> + 'a>;

impl Harness {
    /// Builds the testbed and calibrates once, unless the detector config
    /// already carries penalties, normalization and threshold.
    pub fn prepare(scenario: Scenario) -> Result<Self, BenchError> {
        scenario.validate()?;
        let s = &scenario;
        let (bed, groups) = match s.testbed {
            Testbed::Linear => {
                let sys = gen_random_system(&s.linear, derive_seed(s.seed, SYSTEM))?;
                let groups = sys
                    .connectivity(s.linear.connect_threshold)
                    .into_iter()
                    .enumerate()
                    .map(|(g, mask)| GroupSpec {
                        id: g + 1,
                        mask,
                        states: sys.groups[g].clone(),
                    })
                    .collect();
                (Bed::Linear { sys }, groups)
            }
            Testbed::Grid14 => Self::grid_bed(s)?,
        };
        let (m, n) = bed_dims(&bed);
        let chi2 = ChiSqConfig::new(m, n, s.chi2_significance)?;
        let mut harness = Self {
            calibration: CalibrationSummary {
                detector: s.detector.clone(),
                lambda_max_median: None,
                zero_fraction: None,
                chi2_dof: chi2.dof,
                chi2_threshold: chi2.threshold,
            },
            chi2,
            detector: s.detector.clone(),
            bed,
            groups,
            scenario,
        };
        if !harness.detector.is_calibrated() {
            let ticks = harness.scenario.calibration_ticks;
            let stream: Vec<DVector<f64>> = harness
                .stream(None, derive_seed(harness.scenario.seed, CALIBRATION), ticks)?
                .map(|r| r.map(|(_, z)| z))
                .collect::<Result<_, _>>()?;
            let mut engine = harness.engine()?;
            let cal = calibrate(engine.det(), &stream, &harness.detector)?;
            harness.detector = cal.config.clone();
            harness.calibration.detector = cal.config;
            harness.calibration.lambda_max_median = Some(cal.lambda_max_median);
            harness.calibration.zero_fraction = Some(cal.zero_fraction);
        }
        Ok(harness)
    }

    fn grid_bed(s: &Scenario) -> Result<(Bed, Vec<GroupSpec>), BenchError> {
        let case = match &s.network.case {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| BenchError::io(p, e))?;
                NetworkCase::parse(&text)?
            }
            None => NetworkCase::ieee14(),
        };
        let plan = MeasurementPlan::full(&case, s.grid.sigma_voltage, s.grid.sigma_power)?;
        let ticks = s.stream_length.max(s.calibration_ticks);
        let loads = match &s.network.loads_csv {
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| BenchError::io(p, e))?;
                let loads = LoadProfile::from_csv(f)?;
                if loads.ticks() < ticks {
                    return Err(BenchError::Config(format!(
                        "{} covers {} ticks, the scenario needs {ticks}",
                        p.display(),
                        loads.ticks()
                    )));
                }
                loads
            }
            None => synth_loads(&case, ticks, &s.grid.loads, derive_seed(s.seed, LOADS))?,
        };
        let dispatch = dispatch(&loads, &case, s.grid.loss_margin)?;
        let sets = neighborhood_sets(&case, &plan, s.network.neighborhood);
        let groups = case
            .candidate_buses()
            .into_iter()
            .map(|b| GroupSpec {
                id: b,
                mask: sets[&b].clone(),
                states: case.state_indices(case.index_of(b).expect("candidate bus")),
            })
            .collect();
        let x0 = StateVector::setpoints(&case).to_flat(&case);
        Ok((
            Bed::Grid {
                case,
                plan,
                loads,
                dispatch,
                x0,
            },
            groups,
        ))
    }

    /// `(m, n)`.
    pub fn dims(&self) -> (usize, usize) {
        bed_dims(&self.bed)
    }

    pub fn candidates(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.id).collect()
    }

    fn sigma(&self) -> &DVector<f64> {
        match &self.bed {
            Bed::Linear { sys } => &sys.sensor_sigma,
            Bed::Grid { plan, .. } => plan.sigma(),
        }
    }

    fn x_init(&self) -> DVector<f64> {
        match &self.bed {
            Bed::Linear { sys } => DVector::zeros(sys.state_dim()),
            Bed::Grid { x0, .. } => x0.clone(),
        }
    }

    fn engine(&self) -> Result<Engine<'_>, BenchError> {
        Ok(match &self.bed {
            Bed::Linear { sys } => Engine::Linear {
                det: LinearDetector::new(&sys.h, &sys.sensor_sigma, self.groups.clone())?,
                wls: WlsSolver::new(&sys.h, &sys.sensor_sigma)?,
                model: sys.model(),
            },
            Bed::Grid { case, plan, x0, .. } => {
                let model = AcModel::new(case, plan);
                Engine::Grid {
                    det: NonlinearDetector::new(model, plan.sigma().clone(), self.groups.clone(), x0.clone())?,
                    model,
                }
            }
        })
    }

    /// Measurement stream of `len` ticks, attacked per `attack`.
    fn stream(&self, attack: Option<AttackPlan>, seed: u64, len: usize) -> Result<Stream<'_>, BenchError> {
        Ok(match &self.bed {
            Bed::Linear { sys } => {
                let attack = attack.map(|a| LinearAttack {
                    group: a.group,
                    beta: a.beta,
                    onset: a.onset,
                    mask: self.groups[a.group].mask.clone(),
                });
                let sim = LinearSimulator::new(sys, attack, seed)?;
                Box::new(sim.take(len).map(|r| r.map(|t| (t.t, t.z)).map_err(BenchError::from)))
            }
            Bed::Grid {
                case,
                plan,
                loads,
                dispatch,
                ..
            } => {
                let attack = attack.map(|a| GridAttack {
                    target_bus: self.groups[a.group].id,
                    onset: a.onset,
                    level: a.level,
                    mask: self.groups[a.group].mask.clone(),
                });
                let sim = GridSimulator::new(case, plan, loads, dispatch, attack, seed)?;
                Box::new(sim.take(len).map(|r| r.map(|t| (t.t, t.z)).map_err(BenchError::from)))
            }
        })
    }

    /// Attack for replication `rep` at `level`. The target (and, on the linear
    /// testbed, the shift direction) depends only on `rep`, so every level
    /// sees the same targets and noise.
    fn attack_plan(&self, level: f64, rep: usize) -> Result<Option<AttackPlan>, BenchError> {
        let mut rng = rng_seeded(derive_seed(derive_seed(self.scenario.seed, TARGET), rep as u64));
        let group = rng.random_range(0..self.groups.len());
        if level == 0.0 {
            return Ok(None);
        }
        let onset = self.scenario.onset;
        Ok(Some(match &self.bed {
            Bed::Linear { sys } => {
                let size = self.groups[group].states.len();
                let dir = DVector::from_fn(size, |_, _| rng.sample::<f64, _>(StandardNormal));
                let beta = beta_from_snr(&dir, level, &sys.group_covariance(group)?)?;
                AttackPlan {
                    group,
                    beta,
                    level: 0,
                    onset,
                }
            }
            Bed::Grid { .. } => AttackPlan {
                group,
                beta: DVector::zeros(0),
                level: level as u8,
                onset,
            },
        }))
    }

    /// Runs replication `rep` at `level` until both the SGL detector and the
    /// chi-square detector have alarmed, or the stream ends.
    pub fn replicate(&self, level: f64, rep: usize, keep_log: bool) -> Result<Replication, BenchError> {
        let s = &self.scenario;
        let attack = self.attack_plan(level, rep)?;
        let target = attack.as_ref().map(|a| self.groups[a.group].id);
        let snr = attack.as_ref().filter(|_| s.testbed == Testbed::Linear).map(|_| level);
        let start = if attack.is_some() { s.onset } else { 1 };
        let seed = derive_seed(derive_seed(s.seed, NOISE), rep as u64);
        let sigma = self.sigma();
        let threshold = self.detector.threshold.expect("calibrated in prepare");
        let mut engine = self.engine()?;
        // A separate detector traces the pre-onset ticks, so logging never
        // changes the warm start of the monitored one.
        let mut tracer = if keep_log && start > 1 { Some(self.engine()?) } else { None };
        let log_from = start.saturating_sub(s.log_pre_onset).max(1);
        let mut log = keep_log.then(Vec::new);
        let mut sgl: Option<(usize, Option<usize>, Option<usize>)> = None;
        let mut chi: Option<(usize, Option<usize>)> = None;
        let mut warm = self.x_init();
        for item in self.stream(attack, seed, s.stream_length)? {
            let (t, z) = item?;
            if t < start {
                if let (Some(tr), Some(log)) = (tracer.as_mut(), log.as_mut()) {
                    if t >= log_from {
                        let res = tr.det().step(&z, &self.detector)?;
                        log.push(self.tick_log(t, &res, threshold));
                    }
                }
                continue;
            }
            let chi2 = if sgl.is_none() {
                let res = engine.det().step(&z, &self.detector)?;
                if let Some(log) = log.as_mut() {
                    log.push(self.tick_log(t, &res, threshold));
                }
                warm = res.plain_state.clone();
                if res.alarm {
                    let ht = engine.ht(&z, &res.plain_state, sigma, &self.groups);
                    sgl = Some((t + 1 - start, res.location, ht));
                }
                res.plain_chi2
            } else {
                let (c, x) = engine.plain(&z, &warm, sigma)?;
                warm = x;
                c
            };
            if chi.is_none() && self.chi2.alarm(chi2) {
                chi = Some((t + 1 - start, engine.ht(&z, &warm, sigma, &self.groups)));
            }
            if sgl.is_some() && chi.is_some() {
                break;
            }
        }
        let censored_len = s.stream_length + 1 - start;
        let record = ReplicationRecord {
            level,
            replication: rep,
            target,
            sgl_run_length: sgl.map_or(censored_len, |v| v.0),
            sgl_censored: sgl.is_none(),
            sgl_location: sgl.and_then(|v| v.1),
            ht_at_sgl: sgl.and_then(|v| v.2),
            chi2_run_length: chi.map_or(censored_len, |v| v.0),
            chi2_censored: chi.is_none(),
            ht_at_chi2: chi.and_then(|v| v.1),
            snr,
        };
        Ok(Replication { record, log })
    }

    fn tick_log(&self, t: usize, res: &grid_sentinel_core::detector::StepResult, threshold: f64) -> TickLog {
        TickLog {
            t,
            stat: res.statistic,
            threshold,
            chi2: res.plain_chi2,
            chi2_threshold: self.chi2.threshold,
            alarm: res.alarm,
            location: res.location,
            iterations: res.outer_iterations,
            converged: res.converged,
        }
    }

    /// Every level times every replication, on the configured worker count.
    /// Results are reduced in (level, replication) order, so the output does
    /// not depend on scheduling.
    pub fn run(&self) -> Result<RunOutput, BenchError> {
        let s = &self.scenario;
        let jobs: Vec<(f64, usize)> = s
            .levels
            .iter()
            .flat_map(|&l| (0..s.replications).map(move |r| (l, r)))
            .collect();
        let work = || -> Vec<Result<Replication, BenchError>> {
            jobs.par_iter()
                .map(|&(l, r)| self.replicate(l, r, r < s.log_replications))
                .collect()
        };
        let results = if s.workers > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(s.workers)
                .build()
                .map_err(|e| BenchError::Runtime(e.to_string()))?
                .install(work)
        } else {
            work()
        };
        let mut records = Vec::new();
        let mut logs = Vec::new();
        let mut levels = Vec::new();
        for (li, &level) in s.levels.iter().enumerate() {
            let chunk = &results[li * s.replications..(li + 1) * s.replications];
            let mut done = Vec::new();
            let mut failures = 0;
            for (rep, res) in chunk.iter().enumerate() {
                match res {
                    Ok(r) => {
                        if let Some(ticks) = &r.log {
                            logs.push(SeriesLog {
                                label: format!("{}_r{rep}", s.level_label(level)),
                                level,
                                replication: rep,
                                onset: (level > 0.0).then_some(s.onset),
                                ticks: ticks.clone(),
                            });
                        }
                        done.push(r.record.clone());
                    }
                    Err(e) => {
                        failures += 1;
                        log::warn!("{} replication {rep} failed: {e}", s.level_label(level));
                    }
                }
            }
            if failures as f64 > MAX_FAILURE_RATE * s.replications as f64 {
                return Err(BenchError::TooManyFailures {
                    level,
                    failed: failures,
                    total: s.replications,
                });
            }
            levels.push(self.aggregate(level, &done, failures)?);
            records.extend(done);
        }
        let mut notes = vec![
            "precision, recall and F are macro averages over every candidate group where the value is defined".into(),
            "runs without an alarm by the end of the stream are censored at the stream length; ARL is reported with and without them".into(),
            "hypothesis-testing localization is evaluated at the SGL alarm tick and at the chi-square alarm tick".into(),
        ];
        if let Some(l0) = levels.iter().find(|l| !l.attacked) {
            let arl = &l0.sgl_arl;
            let se = arl.std / (arl.runs as f64).sqrt();
            notes.push(format!(
                "in-control check: ARL0 * alpha = {:.4} (standard error {:.4})",
                arl.mean * self.detector.alpha,
                se * self.detector.alpha
            ));
        }
        Ok(RunOutput {
            metrics: RunMetrics {
                scenario: s.clone(),
                calibration: self.calibration.clone(),
                candidates: self.candidates(),
                levels,
                notes,
            },
            records,
            logs,
        })
    }

    fn aggregate(&self, level: f64, recs: &[ReplicationRecord], failures: usize) -> Result<LevelMetrics, BenchError> {
        if recs.is_empty() {
            return Err(BenchError::Metrics(format!("no completed replications at level {level}")));
        }
        let sgl_arl = arl_stats(&recs.iter().map(|r| (r.sgl_run_length, r.sgl_censored)).collect::<Vec<_>>())?;
        let chi2_arl = arl_stats(&recs.iter().map(|r| (r.chi2_run_length, r.chi2_censored)).collect::<Vec<_>>())?;
        let attacked = level > 0.0;
        let classes = self.candidates();
        let confusion = |pick: fn(&ReplicationRecord) -> Option<usize>| -> Result<Option<Confusion>, BenchError> {
            if !attacked {
                return Ok(None);
            }
            let pairs: Vec<(usize, Option<usize>)> = recs
                .iter()
                .filter_map(|r| r.target.map(|t| (t, pick(r))))
                .collect();
            compute_confusion(&pairs, &classes).map(Some)
        };
        Ok(LevelMetrics {
            level,
            attacked,
            replications: recs.len(),
            failures,
            sgl_arl,
            sgl_localization: confusion(|r| r.sgl_location)?,
            chi2_arl,
            ht_at_sgl_alarm: confusion(|r| r.ht_at_sgl)?,
            ht_at_chi2_alarm: confusion(|r| r.ht_at_chi2)?,
        })
    }

    /// Raw measurement stream of replication `rep` at `level`, for export.
    pub fn simulate(&self, level: f64, rep: usize) -> Result<Vec<(usize, bool, DVector<f64>)>, BenchError> {
        let attack = self.attack_plan(level, rep)?;
        let onset = attack.as_ref().map(|a| a.onset);
        let seed = derive_seed(derive_seed(self.scenario.seed, NOISE), rep as u64);
        self.stream(attack, seed, self.scenario.stream_length)?
            .map(|r| r.map(|(t, z)| (t, onset.is_some_and(|o| t >= o), z)))
            .collect()
    }
}

fn bed_dims(bed: &Bed) -> (usize, usize) {
    match bed {
        Bed::Linear { sys } => (sys.meas_dim(), sys.state_dim()),
        Bed::Grid { case, plan, .. } => (plan.len(), case.state_dim()),
    }
}

struct AttackPlan {
    // index into the harness groups
    group: usize,
    beta: DVector<f64>,
    level: u8,
    onset: usize,
}

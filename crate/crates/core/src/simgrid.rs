//! Nonlinear testbed: synthetic load profiles, proportional dispatch, AC power
//! flow per tick and noisy sensor readings.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{apply_covert_attack, level_factor};
use crate::estimator::MeasurementModel;
use crate::netmodel::{bus_injections, AcModel, BusType, MeasurementPlan, NetworkCase, StateVector};
use crate::rng::{rng_seeded, SimRng};
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadConfig {
    /// Ticks per day.
    pub period: usize,
    /// Relative amplitude of the daily sinusoid.
    pub amplitude: f64,
    /// AR(1) coefficient of the demand noise.
    pub ar_coef: f64,
    /// Stationary standard deviation of the noise, relative to base demand.
    pub noise: f64,
    pub power_factor: f64,
    /// Multiplier on the case's nominal demand.
    pub scale: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            period: 288,
            amplitude: 0.2,
            ar_coef: 0.9,
            noise: 0.03,
            power_factor: 0.95,
            scale: 1.0,
        }
    }
}

/// Per-bus demand series, indexed `[bus][t - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub buses: Vec<usize>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl LoadProfile {
    pub fn ticks(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Total active demand at tick `t` (1-based).
    pub fn total(&self, t: usize) -> f64 {
        self.p.iter().map(|s| s[t - 1]).sum()
    }

    fn check(&self) -> Result<()> {
        let ticks = self.ticks();
        for (k, (p, q)) in self.p.iter().zip(&self.q).enumerate() {
            if p.len() != ticks || q.len() != ticks {
                return Err(Error::Validation(format!(
                    "load series of bus {} has the wrong length",
                    self.buses[k]
                )));
            }
            if p.iter().chain(q).any(|&v| !(v >= 0.0)) {
                return Err(Error::Validation(format!(
                    "negative or missing demand at bus {}",
                    self.buses[k]
                )));
            }
        }
        Ok(())
    }

    /// Reads a profile from CSV with header `t,bus,p,q`. Ticks must be
    /// `1..=T` for every bus.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: usize,
            bus: usize,
            p: f64,
            q: f64,
        }
        let mut series: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let r: Row = row?;
            if series.entry(r.bus).or_default().insert(r.t, (r.p, r.q)).is_some() {
                return Err(Error::Validation(format!("duplicate row for bus {} at t={}", r.bus, r.t)));
            }
        }
        let ticks = series.values().next().map_or(0, BTreeMap::len);
        let mut out = Self {
            buses: Vec::new(),
            p: Vec::new(),
            q: Vec::new(),
        };
        for (bus, rows) in series {
            if rows.len() != ticks || rows.keys().copied().ne(1..=ticks) {
                return Err(Error::Validation(format!("bus {bus} does not cover ticks 1..={ticks}")));
            }
            out.buses.push(bus);
            out.p.push(rows.values().map(|v| v.0).collect());
            out.q.push(rows.values().map(|v| v.1).collect());
        }
        out.check()?;
        Ok(out)
    }

    /// Checks every bus exists in `case`.
    pub fn check_against(&self, case: &NetworkCase) -> Result<()> {
        self.check()?;
        match self.buses.iter().find(|&&b| case.index_of(b).is_none()) {
            Some(b) => Err(Error::Validation(format!("load profile names unknown bus {b}"))),
            None => Ok(()),
        }
    }
}

/// Daily sinusoid plus stationary AR(1) noise on every bus with nominal
/// demand, clipped at zero. All buses share the daily phase.
pub fn synth_loads(case: &NetworkCase, ticks: usize, cfg: &LoadConfig, seed: u64) -> Result<LoadProfile> {
    if ticks == 0 {
        return Err(Error::Validation("load profile needs at least one tick".into()));
    }
    if !(cfg.power_factor > 0.0 && cfg.power_factor <= 1.0) {
        return Err(Error::Validation("power factor must lie in (0, 1]".into()));
    }
    if !(cfg.ar_coef.abs() < 1.0) || cfg.period == 0 {
        return Err(Error::Validation("need |ar_coef| < 1 and a nonzero period".into()));
    }
    let mut rng = rng_seeded(seed);
    let tan_phi = cfg.power_factor.acos().tan();
    let innovation = (1.0 - cfg.ar_coef * cfg.ar_coef).sqrt();
    let mut out = LoadProfile {
        buses: Vec::new(),
        p: Vec::new(),
        q: Vec::new(),
    };
    for bus in case.buses().iter().filter(|b| b.pd > 0.0) {
        let base = bus.pd * cfg.scale;
        let mut ar: f64 = StandardNormal.sample(&mut rng);
        let mut p = Vec::with_capacity(ticks);
        for t in 1..=ticks {
            let daily = cfg.amplitude * (2.0 * PI * t as f64 / cfg.period as f64).sin();
            p.push((base * (1.0 + daily + cfg.noise * ar)).max(0.0));
            let xi: f64 = StandardNormal.sample(&mut rng);
            ar = cfg.ar_coef * ar + innovation * xi;
        }
        out.q.push(p.iter().map(|v| v * tan_phi).collect());
        out.p.push(p);
        out.buses.push(bus.id);
    }
    Ok(out)
}

/// Per-generator active-power setpoints, indexed `[generator][t - 1]`, in
/// case generator order.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub buses: Vec<usize>,
    pub p: Vec<Vec<f64>>,
    pub v_set: Vec<f64>,
}

/// Splits demand plus a loss margin across generators in proportion to
/// capacity. The reference bus picks up whatever the power flow needs beyond
/// its schedule.
pub fn dispatch(loads: &LoadProfile, case: &NetworkCase, loss_margin: f64) -> Result<DispatchPlan> {
    let capacity: f64 = case.generators().iter().map(|g| g.p_max).sum();
    let peak = (1..=loads.ticks()).map(|t| loads.total(t)).fold(0.0, f64::max);
    if capacity < peak * (1.0 + loss_margin) {
        return Err(Error::Dispatch(format!(
            "capacity {capacity:.4} pu below peak demand {peak:.4} pu plus {:.1}% margin",
            loss_margin * 100.0
        )));
    }
    let gens = case.generators();
    Ok(DispatchPlan {
        buses: gens.iter().map(|g| g.bus).collect(),
        p: gens
            .iter()
            .map(|g| {
                (1..=loads.ticks())
                    .map(|t| g.p_max / capacity * loads.total(t) * (1.0 + loss_margin))
                    .collect()
            })
            .collect(),
        v_set: gens.iter().map(|g| g.v_set).collect(),
    })
}

/// Scheduled net injections per bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injections {
    pub fn zero(case: &NetworkCase) -> Self {
        Self {
            p: vec![0.0; case.bus_count()],
            q: vec![0.0; case.bus_count()],
        }
    }

    /// Generation minus demand at tick `t`; `cut` scales one generator's
    /// active output by a factor.
    pub fn at_tick(
        case: &NetworkCase,
        loads: &LoadProfile,
        plan: &DispatchPlan,
        t: usize,
        cut: Option<(usize, f64)>,
    ) -> Result<Self> {
        let mut inj = Self::zero(case);
        for (k, &bus) in loads.buses.iter().enumerate() {
            let pos = case
                .index_of(bus)
                .ok_or_else(|| Error::Validation(format!("load profile names unknown bus {bus}")))?;
            inj.p[pos] -= loads.p[k][t - 1];
            inj.q[pos] -= loads.q[k][t - 1];
        }
        for (k, &bus) in plan.buses.iter().enumerate() {
            let pos = case
                .index_of(bus)
                .ok_or_else(|| Error::Validation(format!("dispatch names unknown bus {bus}")))?;
            let factor = match cut {
                Some((target, f)) if target == bus => f,
                _ => 1.0,
            };
            inj.p[pos] += plan.p[k][t - 1] * factor;
        }
        Ok(inj)
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlow {
    pub state: StateVector,
    pub iterations: usize,
    /// Infinity norm of the final power-balance mismatch.
    pub mismatch: f64,
}

/// Newton-Raphson power flow in polar form. Generator buses hold their
/// voltage setpoint and scheduled `P`; load buses hold `P` and `Q`; the
/// reference bus balances. Starts from `init` or from the setpoints.
pub fn solve_powerflow(case: &NetworkCase, inj: &Injections, init: Option<&StateVector>) -> Result<PowerFlow> {
    let nb = case.bus_count();
    if inj.p.len() != nb || inj.q.len() != nb {
        return Err(Error::dim("injections", nb, inj.p.len().min(inj.q.len())));
    }
    let setpoints = StateVector::setpoints(case);
    let mut state = match init {
        Some(s) => {
            s.check(case)?;
            s.clone()
        }
        None => setpoints.clone(),
    };
    for k in 0..nb {
        if case.buses()[k].kind != BusType::Load {
            state.vm[k] = setpoints.vm[k];
        }
    }
    let p_rows: Vec<usize> = (0..nb).filter(|&k| k != case.reference()).collect();
    let q_rows: Vec<usize> = (0..nb).filter(|&k| case.buses()[k].kind == BusType::Load).collect();
    let unknowns: Vec<usize> = p_rows
        .iter()
        .map(|&k| case.slots(k).va.expect("non-reference bus has an angle"))
        .chain(q_rows.iter().map(|&k| case.slots(k).vm))
        .collect();
    let dim = unknowns.len();
    let mut x = state.to_flat(case);
    for it in 0..=50 {
        let s = StateVector::from_flat(case, &x)?;
        let (p, q, jp, jq) = bus_injections(case, &s);
        let f = DVector::from_iterator(
            dim,
            p_rows
                .iter()
                .map(|&k| p[k] - inj.p[k])
                .chain(q_rows.iter().map(|&k| q[k] - inj.q[k])),
        );
        let mismatch = linalg::inf_norm(&f);
        if !mismatch.is_finite() {
            break;
        }
        if mismatch < 1e-8 {
            return Ok(PowerFlow {
                state: s,
                iterations: it,
                mismatch,
            });
        }
        if it == 50 {
            break;
        }
        let jac = DMatrix::from_fn(dim, dim, |r, c| {
            let col = unknowns[c];
            if r < p_rows.len() {
                jp[(p_rows[r], col)]
            } else {
                jq[(q_rows[r - p_rows.len()], col)]
            }
        });
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| Error::PowerFlow("singular power-flow Jacobian".into()))?;
        for (c, &col) in unknowns.iter().enumerate() {
            x[col] += dx[c];
        }
    }
    Err(Error::PowerFlow("no convergence within 50 Newton iterations".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub sigma_voltage: f64,
    pub sigma_power: f64,
    pub loads: LoadConfig,
    pub loss_margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            sigma_voltage: 0.01,
            sigma_power: 0.02,
            loads: LoadConfig::default(),
            loss_margin: 0.03,
        }
    }
}

/// Generation cut at one generator bus, masked on the sensors in `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAttack {
    pub target_bus: usize,
    pub onset: usize,
    pub level: u8,
    pub mask: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GridTick {
    pub t: usize,
    /// Physical state, with the target bus shifted once the attack is active.
    pub state: StateVector,
    pub z: DVector<f64>,
    /// State shift on the target's state indices, when attacked.
    pub beta: Option<DVector<f64>>,
    pub pf_iterations: usize,
}

/// Per-tick stream: power flow, sensor noise, optional covert attack. Noise is
/// drawn before anything else each tick, so the attack-free prefix of an
/// attacked stream matches the clean stream exactly.
pub struct GridSimulator<'a> {
    case: &'a NetworkCase,
    model: AcModel<'a>,
    loads: &'a LoadProfile,
    plan: &'a DispatchPlan,
    attack: Option<(GridAttack, Vec<usize>, f64)>,
    rng: SimRng,
    warm: Option<StateVector>,
    warm_cut: Option<StateVector>,
    t: usize,
}

impl<'a> GridSimulator<'a> {
    pub fn new(
        case: &'a NetworkCase,
        sensors: &'a MeasurementPlan,
        loads: &'a LoadProfile,
        plan: &'a DispatchPlan,
        attack: Option<GridAttack>,
        seed: u64,
    ) -> Result<Self> {
        loads.check_against(case)?;
        let attack = match attack {
            Some(a) => {
                let candidates = case.candidate_buses();
                if !candidates.contains(&a.target_bus) {
                    return Err(Error::Attack(format!(
                        "bus {} is not an attackable generator bus (candidates {candidates:?})",
                        a.target_bus
                    )));
                }
                let states = case.state_indices(case.index_of(a.target_bus).expect("candidate bus"));
                let factor = level_factor(a.level)?;
                Some((a, states, factor))
            }
            None => None,
        };
        Ok(Self {
            case,
            model: AcModel::new(case, sensors),
            loads,
            plan,
            attack,
            rng: rng_seeded(seed),
            warm: None,
            warm_cut: None,
            t: 0,
        })
    }

    pub fn next_tick(&mut self) -> Result<GridTick> {
        self.t += 1;
        let t = self.t;
        let sigma = self.model.plan.sigma();
        let noise = DVector::from_fn(sigma.len(), |j, _| {
            let xi: f64 = StandardNormal.sample(&mut self.rng);
            sigma[j] * xi
        });
        let flagged = |e: Error| Error::PowerFlow(format!("tick {t}: {e}"));
        let inj = Injections::at_tick(self.case, self.loads, self.plan, t, None)?;
        let pf = solve_powerflow(self.case, &inj, self.warm.as_ref()).map_err(flagged)?;
        let x = pf.state.to_flat(self.case);
        self.warm = Some(pf.state.clone());
        let active = self.attack.as_ref().filter(|(a, _, _)| t >= a.onset);
        let Some((a, states, factor)) = active else {
            return Ok(GridTick {
                t,
                z: self.model.eval(&x)? + noise,
                state: pf.state,
                beta: None,
                pf_iterations: pf.iterations,
            });
        };
        let cut_inj = Injections::at_tick(self.case, self.loads, self.plan, t, Some((a.target_bus, *factor)))?;
        let start = self.warm_cut.as_ref().unwrap_or(&pf.state);
        let cut = solve_powerflow(self.case, &cut_inj, Some(start)).map_err(flagged)?;
        let x_cut = cut.state.to_flat(self.case);
        let beta = DVector::from_iterator(states.len(), states.iter().map(|&s| x_cut[s] - x[s]));
        self.warm_cut = Some(cut.state);
        let out = apply_covert_attack(&self.model, &x, &noise, states, &beta, &a.mask)?;
        Ok(GridTick {
            t,
            state: StateVector::from_flat(self.case, &out.x_attacked)?,
            z: out.z_attacked,
            beta: Some(beta),
            pf_iterations: pf.iterations,
        })
    }
}

impl Iterator for GridSimulator<'_> {
    type Item = Result<GridTick>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.t < self.loads.ticks()).then(|| self.next_tick())
    }
}

/// Runs a whole stream, one tick per load-profile entry.
pub fn simulate_stream(
    case: &NetworkCase,
    sensors: &MeasurementPlan,
    loads: &LoadProfile,
    plan: &DispatchPlan,
    attack: Option<GridAttack>,
    seed: u64,
) -> Result<Vec<GridTick>> {
    GridSimulator::new(case, sensors, loads, plan, attack, seed)?.collect()
}

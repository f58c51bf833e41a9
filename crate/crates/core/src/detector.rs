//! Attack detection and localization by alternating state estimation and
//! sparse group lasso on the estimation residual.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimator::{newton_se, MeasurementModel, NewtonOptions, WlsSolver};
use crate::sgl::{solve_sgl, GroupWeighting, SglProblem};
use crate::{linalg, Error, Result};

/// Index data of one candidate group: its label (bus id, or group number on
/// the linear testbed), masked sensors `M_i` and state indices `S_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: usize,
    pub mask: Vec<usize>,
    pub states: Vec<usize>,
}

/// `B_i = H[., S_i]` with the rows in `M_i` set to zero.
pub fn build_basis(h: &DMatrix<f64>, group: &GroupSpec) -> Result<DMatrix<f64>> {
    if let Some(&bad) = group.states.iter().find(|&&k| k >= h.ncols()) {
        return Err(Error::dim("basis state index", h.ncols(), bad));
    }
    if let Some(&bad) = group.mask.iter().find(|&&j| j >= h.nrows()) {
        return Err(Error::dim("basis sensor index", h.nrows(), bad));
    }
    let mut b = DMatrix::from_fn(h.nrows(), group.states.len(), |j, k| h[(j, group.states[k])]);
    for &j in &group.mask {
        b.row_mut(j).fill(0.0);
    }
    if b.iter().all(|&v| v == 0.0) {
        return Err(Error::Unmonitorable { bus: group.id });
    }
    Ok(b)
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    pub groups: Vec<GroupSpec>,
    pub bases: Vec<DMatrix<f64>>,
}

impl BasisSet {
    pub fn build(h: &DMatrix<f64>, groups: Vec<GroupSpec>) -> Result<Self> {
        let bases = groups.iter().map(|g| build_basis(h, g)).collect::<Result<_>>()?;
        Ok(Self { groups, bases })
    }

    /// Bases with row `j` divided by `sigma[j]`.
    fn whitened(&self, w: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.bases.iter().map(|b| linalg::scale_rows(b, w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Target false-alarm probability per tick.
    pub alpha: f64,
    /// Explicit penalties; calibration fills them from `penalty_scale` and
    /// `l1_ratio` when absent.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// `lambda2 = penalty_scale * median lambda_max`.
    pub penalty_scale: f64,
    /// `lambda1 = l1_ratio * lambda2`.
    pub l1_ratio: f64,
    pub normalization: Option<f64>,
    pub threshold: Option<f64>,
    /// Outer-loop tolerance on the infinity-norm state change.
    pub tol: f64,
    pub max_outer: usize,
    pub weighting: GroupWeighting,
    pub sgl_tol: f64,
    pub sgl_max_sweeps: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            lambda1: None,
            lambda2: None,
            penalty_scale: 0.1,
            l1_ratio: 0.5,
            normalization: None,
            threshold: None,
            tol: 1e-6,
            max_outer: 50,
            weighting: GroupWeighting::Unit,
            sgl_tol: 1e-8,
            sgl_max_sweeps: 10_000,
        }
    }
}

impl DetectorConfig {
    pub fn is_calibrated(&self) -> bool {
        self.lambda1.is_some() && self.lambda2.is_some() && self.normalization.is_some() && self.threshold.is_some()
    }

    fn penalties(&self) -> Result<(f64, f64)> {
        match (self.lambda1, self.lambda2) {
            (Some(l1), Some(l2)) => Ok((l1, l2)),
            _ => Err(Error::Calibration("penalties are not set".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_outer == 0 {
            return Err(Error::Calibration("need tol > 0 and at least one outer iteration".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Calibration(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: DVector<f64>,
    /// `z - h(x_hat)` at the last iterate, on the original measurement.
    pub residual: DVector<f64>,
    pub coefficients: Vec<DVector<f64>>,
    pub group_l1: Vec<f64>,
    /// `max_i ||beta_i||_1`, before normalization.
    pub raw: f64,
    /// `raw / normalization`, or `raw` when uncalibrated.
    pub statistic: f64,
    /// Id of the group attaining the maximum, when it is positive.
    pub location: Option<usize>,
    pub tie: bool,
    pub alarm: bool,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Measurement after removing the explained part, `z - sum_i B_i beta_i`.
    pub corrected: DVector<f64>,
    /// Plain estimate and `r^T Sigma^-1 r` before any correction, for the
    /// chi-square baseline.
    pub plain_state: DVector<f64>,
    pub plain_chi2: f64,
}

/// One detector over a stream of measurement vectors.
pub trait StepDetector {
    fn groups(&self) -> &[GroupSpec];

    /// `max_i ||B_i^T r||_2` for the whitened residual of the plain estimate,
    /// the smallest `lambda2` that zeroes every group when `lambda1 = 0`.
    fn lambda_max(&mut self, z: &DVector<f64>) -> Result<f64>;

    fn step(&mut self, z: &DVector<f64>, cfg: &DetectorConfig) -> Result<StepResult>;

    /// Forgets warm-start state carried between ticks.
    fn reset(&mut self) {}
}

struct Summary {
    group_l1: Vec<f64>,
    raw: f64,
    location: Option<usize>,
    tie: bool,
}

fn summarize(groups: &[GroupSpec], coefs: &[DVector<f64>]) -> Summary {
    let group_l1: Vec<f64> = coefs.iter().map(|b| b.lp_norm(1)).collect();
    let raw = group_l1.iter().cloned().fold(0.0, f64::max);
    let mut location = None;
    let mut tie = false;
    if raw > 0.0 {
        let winners: Vec<usize> = groups
            .iter()
            .zip(&group_l1)
            .filter(|(_, &v)| v == raw)
            .map(|(g, _)| g.id)
            .collect();
        tie = winners.len() > 1;
        location = winners.into_iter().min();
        if tie {
            log::debug!("argmax tie between groups, reporting lowest id {location:?}");
        }
    }
    Summary {
        group_l1,
        raw,
        location,
        tie,
    }
}

fn explained(bases: &[DMatrix<f64>], coefs: &[DVector<f64>], m: usize) -> DVector<f64> {
    let mut out = DVector::zeros(m);
    for (b, c) in bases.iter().zip(coefs) {
        if c.iter().any(|&v| v != 0.0) {
            out += b * c;
        }
    }
    out
}

fn sgl_fit(
    r: &DVector<f64>,
    w: &DVector<f64>,
    whitened: Vec<DMatrix<f64>>,
    cfg: &DetectorConfig,
    warm: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let (l1, l2) = cfg.penalties()?;
    let problem = SglProblem::new(r.component_mul(w), whitened, l1, l2)?
        .with_weighting(cfg.weighting)
        .with_tolerance(cfg.sgl_tol, cfg.sgl_max_sweeps);
    let sol = solve_sgl(&problem, Some(warm));
    if !sol.converged {
        log::debug!("SGL stopped after {} sweeps, KKT residual {:.3e}", sol.sweeps, sol.kkt);
    }
    Ok(sol.coefficients)
}

fn finish(
    summary: Summary,
    cfg: &DetectorConfig,
    parts: (DVector<f64>, DVector<f64>, Vec<DVector<f64>>, DVector<f64>),
    outer: (usize, bool),
    plain: (DVector<f64>, f64),
) -> StepResult {
    let statistic = match cfg.normalization {
        Some(n) => summary.raw / n,
        None => summary.raw,
    };
    let alarm = cfg.threshold.is_some_and(|th| statistic > th);
    let (state, residual, coefficients, corrected) = parts;
    StepResult {
        state,
        residual,
        coefficients,
        group_l1: summary.group_l1,
        raw: summary.raw,
        statistic,
        location: summary.location,
        tie: summary.tie,
        alarm,
        outer_iterations: outer.0,
        converged: outer.1,
        corrected,
        plain_state: plain.0,
        plain_chi2: plain.1,
    }
}

fn chi2(r: &DVector<f64>, w: &DVector<f64>) -> f64 {
    r.component_mul(w).norm_squared()
}

/// Detector for a linear model `z = H x + v` with fixed bases.
pub struct LinearDetector {
    wls: WlsSolver,
    basis: BasisSet,
    whitened: Vec<DMatrix<f64>>,
    // whitened `B_i - H G B_i`
    projected: Vec<DMatrix<f64>>,
    w: DVector<f64>,
}

impl LinearDetector {
    pub fn new(h: &DMatrix<f64>, sigma: &DVector<f64>, groups: Vec<GroupSpec>) -> Result<Self> {
        let wls = WlsSolver::new(h, sigma)?;
        let basis = BasisSet::build(h, groups)?;
        let w = sigma.map(|s| 1.0 / s);
        let whitened = basis.whitened(&w);
        let projected = basis.bases.iter().map(|b| linalg::scale_rows(&wls.unexplained(b), &w)).collect();
        Ok(Self {
            wls,
            basis,
            whitened,
            projected,
            w,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }
}

impl StepDetector for LinearDetector {
    fn groups(&self) -> &[GroupSpec] {
        &self.basis.groups
    }

    fn lambda_max(&mut self, z: &DVector<f64>) -> Result<f64> {
        let r = self.wls.solve(z).residual.component_mul(&self.w);
        Ok(self
            .whitened
            .iter()
            .map(|b| (b.transpose() * &r).norm())
            .fold(0.0, f64::max))
    }

    fn step(&mut self, z: &DVector<f64>, cfg: &DetectorConfig) -> Result<StepResult> {
        cfg.validate()?;
        let h = self.wls.h();
        if z.len() != h.nrows() {
            return Err(Error::dim("measurement vector", h.nrows(), z.len()));
        }
        let zeros: Vec<DVector<f64>> = self.basis.bases.iter().map(|b| DVector::zeros(b.ncols())).collect();
        let mut x = self.wls.estimate(z);
        let mut r = z - h * &x;
        let plain = (x.clone(), chi2(&r, &self.w));
        let mut coefs = sgl_fit(&r, &self.w, self.projected.clone(), cfg, &zeros)?;
        let mut corrected = z - explained(&self.basis.bases, &coefs, z.len());
        let mut converged = false;
        let mut outer = 1;
        while outer < cfg.max_outer {
            outer += 1;
            let prev = std::mem::replace(&mut x, self.wls.estimate(&corrected));
            r = z - h * &x;
            coefs = sgl_fit(&r, &self.w, self.whitened.clone(), cfg, &coefs)?;
            corrected = z - explained(&self.basis.bases, &coefs, z.len());
            if linalg::inf_norm(&(&x - prev)) < cfg.tol {
                converged = true;
                break;
            }
        }
        let summary = summarize(&self.basis.groups, &coefs);
        Ok(finish(
            summary,
            cfg,
            (x, r, coefs, corrected),
            (outer, converged),
            plain,
        ))
    }
}

/// Detector for a nonlinear model: Gauss-Newton estimates, bases rebuilt from
/// the Jacobian at every outer iteration, warm-started from the previous tick.
pub struct NonlinearDetector<M: MeasurementModel> {
    model: M,
    sigma: DVector<f64>,
    w: DVector<f64>,
    groups: Vec<GroupSpec>,
    x_init: DVector<f64>,
    x_warm: DVector<f64>,
    pub newton: NewtonOptions,
}

impl<M: MeasurementModel> NonlinearDetector<M> {
    pub fn new(model: M, sigma: DVector<f64>, groups: Vec<GroupSpec>, x_init: DVector<f64>) -> Result<Self> {
        if sigma.len() != model.meas_dim() {
            return Err(Error::dim("noise levels", model.meas_dim(), sigma.len()));
        }
        if x_init.len() != model.state_dim() {
            return Err(Error::dim("initial state", model.state_dim(), x_init.len()));
        }
        // surfaces unmonitorable buses up front
        BasisSet::build(&model.jacobian(&x_init)?, groups.clone())?;
        let w = sigma.map(|s| 1.0 / s);
        Ok(Self {
            model,
            sigma,
            w,
            groups,
            x_warm: x_init.clone(),
            x_init,
            newton: NewtonOptions::default(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// State the next tick starts from.
    pub fn warm_state(&self) -> &DVector<f64> {
        &self.x_warm
    }

    fn estimate(&self, z: &DVector<f64>, from: &DVector<f64>) -> Result<(DVector<f64>, f64, bool)> {
        let est = newton_se(&self.model, z, &self.sigma, from, self.newton)?;
        Ok((est.state, est.chi2, est.converged))
    }
}

impl<M: MeasurementModel> StepDetector for NonlinearDetector<M> {
    fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    fn lambda_max(&mut self, z: &DVector<f64>) -> Result<f64> {
        let (x, _, _) = self.estimate(z, &self.x_warm.clone())?;
        let r = (z - self.model.eval(&x)?).component_mul(&self.w);
        let basis = BasisSet::build(&self.model.jacobian(&x)?, self.groups.clone())?;
        self.x_warm = x;
        Ok(basis
            .whitened(&self.w)
            .iter()
            .map(|b| (b.transpose() * &r).norm())
            .fold(0.0, f64::max))
    }

    fn step(&mut self, z: &DVector<f64>, cfg: &DetectorConfig) -> Result<StepResult> {
        cfg.validate()?;
        if z.len() != self.model.meas_dim() {
            return Err(Error::dim("measurement vector", self.model.meas_dim(), z.len()));
        }
        let zeros: Vec<DVector<f64>> = self.groups.iter().map(|g| DVector::zeros(g.states.len())).collect();
        let (mut x, c2, mut se_ok) = self.estimate(z, &self.x_warm)?;
        let mut r = z - self.model.eval(&x)?;
        let plain = (x.clone(), c2);
        let jac = self.model.jacobian(&x)?;
        let basis = BasisSet::build(&jac, self.groups.clone())?;
        let wls = WlsSolver::new(&jac, &self.sigma)?;
        let projected = basis
            .bases
            .iter()
            .map(|b| linalg::scale_rows(&wls.unexplained(b), &self.w))
            .collect();
        let mut coefs = sgl_fit(&r, &self.w, projected, cfg, &zeros)?;
        let mut corrected = z - explained(&basis.bases, &coefs, z.len());
        let mut converged = false;
        let mut outer = 1;
        while outer < cfg.max_outer {
            outer += 1;
            let (xn, _, ok) = self.estimate(&corrected, &x)?;
            se_ok &= ok;
            let prev = std::mem::replace(&mut x, xn);
            r = z - self.model.eval(&x)?;
            let basis = BasisSet::build(&self.model.jacobian(&x)?, self.groups.clone())?;
            coefs = sgl_fit(&r, &self.w, basis.whitened(&self.w), cfg, &coefs)?;
            corrected = z - explained(&basis.bases, &coefs, z.len());
            if linalg::inf_norm(&(&x - prev)) < cfg.tol {
                converged = true;
                break;
            }
        }
        if !se_ok {
            log::warn!("state estimation did not converge within a detector step");
        }
        self.x_warm = x.clone();
        let summary = summarize(&self.groups, &coefs);
        Ok(finish(
            summary,
            cfg,
            (x, r, coefs, corrected),
            (outer, converged && se_ok),
            plain,
        ))
    }

    fn reset(&mut self) {
        self.x_warm = self.x_init.clone();
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub config: DetectorConfig,
    /// Median over calibration ticks of `lambda_max`.
    pub lambda_max_median: f64,
    /// Fraction of calibration ticks with every group at zero.
    pub zero_fraction: f64,
    /// Normalized in-control statistics, in stream order.
    pub statistics: Vec<f64>,
}

/// Fixes penalties, the normalization constant and the alarm threshold from
/// an attack-free stream of at least 500 ticks.
pub fn calibrate<D: StepDetector + ?Sized>(det: &mut D, stream: &[DVector<f64>], draft: &DetectorConfig) -> Result<Calibration> {
    if stream.len() < 500 {
        return Err(Error::Calibration(format!(
            "need at least 500 in-control ticks, got {}",
            stream.len()
        )));
    }
    draft.validate()?;
    let mut cfg = draft.clone();
    cfg.normalization = None;
    cfg.threshold = None;
    det.reset();
    let mut lmax = stream.iter().map(|z| det.lambda_max(z)).collect::<Result<Vec<_>>>()?;
    lmax.sort_by(f64::total_cmp);
    let median = if lmax.len() % 2 == 1 {
        lmax[lmax.len() / 2]
    } else {
        0.5 * (lmax[lmax.len() / 2 - 1] + lmax[lmax.len() / 2])
    };
    if cfg.lambda2.is_none() {
        cfg.lambda2 = Some(cfg.penalty_scale * median);
    }
    if cfg.lambda1.is_none() {
        cfg.lambda1 = Some(cfg.l1_ratio * cfg.lambda2.expect("set above"));
    }
    det.reset();
    let mut raw = Vec::with_capacity(stream.len());
    for z in stream {
        raw.push(det.step(z, &cfg)?.raw);
    }
    det.reset();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Calibration(
            "every in-control statistic is zero; use smaller penalties".into(),
        ));
    }
    let zero_fraction = raw.iter().filter(|&&v| v == 0.0).count() as f64 / raw.len() as f64;
    let statistics: Vec<f64> = raw.iter().map(|v| v / mean).collect();
    let threshold = linalg::upper_quantile(&statistics, 1.0 - cfg.alpha).expect("non-empty stream");
    if !(threshold > 0.0) {
        return Err(Error::Calibration(format!(
            "the {:.4} quantile of the in-control statistic is zero; use smaller penalties",
            1.0 - cfg.alpha
        )));
    }
    cfg.normalization = Some(mean);
    cfg.threshold = Some(threshold);
    log::info!(
        "calibrated: lambda1={:.4e} lambda2={:.4e} normalization={mean:.4e} threshold={threshold:.4} in-control zero fraction={zero_fraction:.3}",
        cfg.lambda1.unwrap_or_default(),
        cfg.lambda2.unwrap_or_default()
    );
    Ok(Calibration {
        config: cfg,
        lambda_max_median: median,
        zero_fraction,
        statistics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: usize,
    pub stat: f64,
    pub threshold: f64,
    pub alarm: bool,
    pub location: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub alarm_tick: Option<usize>,
    pub location: Option<usize>,
    /// `alarm_tick - start + 1`, or the number of monitored ticks when no
    /// alarm was raised.
    pub run_length: usize,
    pub censored: bool,
    pub records: Vec<TickRecord>,
    /// Full result at the alarm tick.
    pub alarm_step: Option<StepResult>,
}

/// Runs the detector over `(t, z)` pairs from tick `start` on and stops at the
/// first alarm. Earlier ticks are skipped.
pub fn monitor<D, I>(det: &mut D, stream: I, cfg: &DetectorConfig, start: usize) -> Result<DetectionOutcome>
where
    D: StepDetector + ?Sized,
    I: IntoIterator<Item = Result<(usize, DVector<f64>)>>,
{
    let threshold = cfg
        .threshold
        .ok_or_else(|| Error::Calibration("monitoring needs a calibrated threshold".into()))?;
    let mut records = Vec::new();
    for item in stream {
        let (t, z) = item?;
        if t < start {
            continue;
        }
        let res = det.step(&z, cfg)?;
        if res.tie {
            log::info!("tick {t}: argmax tie, located at lowest id {:?}", res.location);
        }
        records.push(TickRecord {
            t,
            stat: res.statistic,
            threshold,
            alarm: res.alarm,
            location: res.location,
            iterations: res.outer_iterations,
            converged: res.converged,
        });
        if res.alarm {
            return Ok(DetectionOutcome {
                alarm_tick: Some(t),
                location: res.location,
                run_length: t + 1 - start,
                censored: false,
                records,
                alarm_step: Some(res),
            });
        }
    }
    Ok(DetectionOutcome {
        alarm_tick: None,
        location: None,
        run_length: records.len(),
        censored: true,
        records,
        alarm_step: None,
    })
}

/// Writes per-tick records as CSV `t,stat,threshold,alarm,location,iterations,converged`.
pub fn write_records<W: Write>(records: &[TickRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "statistics log".into(),
        source: e,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_seeded;
    use rand::Rng;

    #[test]
    fn basis_by_definition() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = GroupSpec {
            id: 1,
            mask: vec![0],
            states: vec![0],
        };
        let b = build_basis(&h, &g).unwrap();
        assert_eq!(b, DMatrix::from_column_slice(3, 1, &[0.0, 3.0, 5.0]));
        let all = GroupSpec {
            mask: vec![0, 1, 2],
            ..g
        };
        assert!(matches!(build_basis(&h, &all), Err(Error::Unmonitorable { bus: 1 })));
    }

    fn toy() -> (DMatrix<f64>, Vec<GroupSpec>) {
        let mut rng = rng_seeded(21);
        let h = DMatrix::from_fn(30, 8, |_, _| {
            if rng.random_bool(0.4) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            }
        }) + DMatrix::from_fn(30, 8, |j, k| if j % 8 == k { 1.0 } else { 0.0 });
        let groups = (0..4)
            .map(|g| {
                let states = vec![2 * g, 2 * g + 1];
                let mask = (0..30)
                    .filter(|&j| states.iter().any(|&k| h[(j, k)] > 0.5))
                    .collect();
                GroupSpec {
                    id: g + 1,
                    mask,
                    states,
                }
            })
            .collect();
        (h, groups)
    }

    fn fixed(l1: f64, l2: f64) -> DetectorConfig {
        DetectorConfig {
            lambda1: Some(l1),
            lambda2: Some(l2),
            normalization: Some(1.0),
            threshold: Some(1e-3),
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn noiseless_in_control_tick_is_quiet() {
        let (h, groups) = toy();
        let mut det = LinearDetector::new(&h, &DVector::from_element(30, 0.01), groups).unwrap();
        let x = DVector::from_fn(8, |k, _| 0.1 * k as f64);
        let res = det.step(&(&h * &x), &fixed(0.5, 1.0)).unwrap();
        assert_eq!(res.raw, 0.0);
        assert_eq!(res.location, None);
        assert!(!res.alarm);
        assert!((res.state - x).amax() < 1e-10);
    }

    #[test]
    fn explained_residual_bookkeeping() {
        let (h, groups) = toy();
        let mut det = LinearDetector::new(&h, &DVector::from_element(30, 0.01), groups).unwrap();
        let b2 = det.basis().bases[1].clone();
        let z = &h * DVector::from_element(8, 0.2) + &b2 * DVector::from_vec(vec![1.0, -0.5]);
        let res = det.step(&z, &fixed(0.5, 1.0)).unwrap();
        let total = explained(&det.basis().bases, &res.coefficients, 30);
        assert!((&res.corrected + total - &z).amax() < 1e-12);
        assert_eq!(res.location, Some(2));
        assert!(res.alarm);
    }
}

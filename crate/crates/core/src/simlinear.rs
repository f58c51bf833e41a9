//! Randomized linear state-space testbed with an LQR controller acting on the
//! WLS state estimate.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::attack::{apply_covert_attack, CovertOutcome};
use crate::estimator::{LinearModel, WlsSolver};
use crate::rng::{rng_seeded, SimRng};
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub states: usize,
    pub sensors: usize,
    pub density: f64,
    pub groups: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    /// Isotropic process-noise variance.
    pub process_var: f64,
    /// Sensor noise standard deviation, same for every sensor.
    pub sensor_sigma: f64,
    /// `max_k |H[j, k]|` above this puts sensor `j` in `M_i`.
    pub connect_threshold: f64,
    pub max_retries: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            states: 20,
            sensors: 30,
            density: 0.2,
            groups: 4,
            eig_min: 0.2,
            eig_max: 0.95,
            process_var: 1e-4,
            sensor_sigma: 0.001,
            connect_threshold: 0.5,
            max_retries: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    /// Control-input matrix.
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    process_chol: DMatrix<f64>,
    /// Per-sensor noise standard deviations.
    pub sensor_sigma: DVector<f64>,
    pub gain: DMatrix<f64>,
    /// State indices of each group, in group order.
    pub groups: Vec<Vec<usize>>,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        process_cov: DMatrix<f64>,
        sensor_sigma: DVector<f64>,
        gain: DMatrix<f64>,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("transition matrix columns", n, a.ncols()));
        }
        if g.nrows() != n {
            return Err(Error::dim("control matrix rows", n, g.nrows()));
        }
        if h.ncols() != n {
            return Err(Error::dim("measurement matrix columns", n, h.ncols()));
        }
        if gain.nrows() != g.ncols() || gain.ncols() != n {
            return Err(Error::dim("gain matrix", g.ncols() * n, gain.len()));
        }
        if sensor_sigma.len() != h.nrows() {
            return Err(Error::dim("sensor noise levels", h.nrows(), sensor_sigma.len()));
        }
        if process_cov.nrows() != n || process_cov.ncols() != n {
            return Err(Error::dim("process covariance", n, process_cov.nrows()));
        }
        let process_chol = if linalg::max_abs_entry(&process_cov) == 0.0 {
            DMatrix::zeros(n, n)
        } else {
            process_cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("process covariance is not positive definite".into()))?
                .l()
        };
        if groups.iter().flatten().any(|&k| k >= n) {
            return Err(Error::Validation("group state index out of range".into()));
        }
        Ok(Self {
            a,
            g,
            h,
            process_cov,
            process_chol,
            sensor_sigma,
            gain,
            groups,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn model(&self) -> LinearModel {
        LinearModel { h: self.h.clone() }
    }

    /// `x+ = A x + G u + e`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, rng: &mut SimRng) -> DVector<f64> {
        let xi = gaussian(self.state_dim(), rng);
        &self.a * x + &self.g * u + &self.process_chol * xi
    }

    /// Sensor noise draw, `v ~ N(0, diag(sigma^2))`.
    pub fn sensor_noise(&self, rng: &mut SimRng) -> DVector<f64> {
        gaussian(self.meas_dim(), rng).component_mul(&self.sensor_sigma)
    }

    /// `z = H x + v`.
    pub fn measure(&self, x: &DVector<f64>, rng: &mut SimRng) -> DVector<f64> {
        &self.h * x + self.sensor_noise(rng)
    }

    /// Stationary covariance of the true state under the certainty-equivalent
    /// loop `x+ = (A - G K) x - G K eps + e`, where `eps` is the WLS error.
    pub fn state_covariance(&self) -> Result<DMatrix<f64>> {
        let wls = WlsSolver::new(&self.h, &self.sensor_sigma)?;
        let gk = &self.g * &self.gain;
        let f = &self.a - &gk;
        let w = &self.process_cov + &gk * wls.error_covariance() * gk.transpose();
        linalg::discrete_lyapunov(&f, &w)
    }

    /// Covariance of the states of group `i`.
    pub fn group_covariance(&self, i: usize) -> Result<DMatrix<f64>> {
        let full = self.state_covariance()?;
        let s = &self.groups[i];
        Ok(DMatrix::from_fn(s.len(), s.len(), |a, b| full[(s[a], s[b])]))
    }

    /// Sensor sets `M_i` of every group.
    pub fn connectivity(&self, threshold: f64) -> Vec<Vec<usize>> {
        connectivity(&self.h, &self.groups, threshold)
    }
}

fn gaussian(n: usize, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// `M_i = { j : max_{k in S_i} |H[j, k]| > threshold }`.
pub fn connectivity(h: &DMatrix<f64>, groups: &[Vec<usize>], threshold: f64) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|s| {
            (0..h.nrows())
                .filter(|&j| s.iter().any(|&k| h[(j, k)].abs() > threshold))
                .collect()
        })
        .collect()
}

/// Contiguous groups of near-equal size.
pub fn contiguous_groups(n: usize, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|g| (g * n / count..(g + 1) * n / count).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct Lqr {
    pub gain: DMatrix<f64>,
    pub riccati: DMatrix<f64>,
    pub iterations: usize,
}

/// Infinite-horizon discrete LQR by Riccati fixed-point iteration from `P = Q`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Lqr> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n || g.nrows() != n {
        return Err(Error::dim("LQR state dimension", n, q.nrows()));
    }
    if r.nrows() != g.ncols() || r.ncols() != g.ncols() {
        return Err(Error::dim("LQR control dimension", g.ncols(), r.nrows()));
    }
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = r + g.transpose() * p * g;
        let rhs = g.transpose() * p * a;
        s.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Numerical("control cost plus G'PG is not positive definite".into()))
    };
    let mut p = q.clone();
    for it in 1..=10_000 {
        let k = gain_of(&p)?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * g * &k;
        let next = (&next + next.transpose()) * 0.5;
        let delta = linalg::max_abs_entry(&(&next - &p));
        p = next;
        if !delta.is_finite() {
            break;
        }
        if delta < 1e-10 {
            return Ok(Lqr {
                gain: gain_of(&p)?,
                riccati: p,
                iterations: it,
            });
        }
    }
    Err(Error::Numerical("Riccati iteration did not converge in 10^4 steps".into()))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        if r[(k, k)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn random_sparse(m: usize, n: usize, nnz: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let value = Uniform::new(0.0, 1.0).expect("valid range");
    let mut h = DMatrix::zeros(m, n);
    let mut used = vec![false; m * n];
    // one entry per column first
    for k in 0..n {
        let j = rng.random_range(0..m);
        used[k * m + j] = true;
    }
    let free: Vec<usize> = (0..m * n).filter(|&p| !used[p]).collect();
    for pick in sample(rng, free.len(), nnz - n) {
        used[free[pick]] = true;
    }
    for (p, _) in used.iter().enumerate().filter(|(_, &u)| u) {
        // uniform on (0, 1): resample the measure-zero 0
        let mut v = value.sample(rng);
        while v == 0.0 {
            v = value.sample(rng);
        }
        h[(p % m, p / m)] = v;
    }
    h
}

/// Draws a random stable system: `A = V D V^T` with eigenvalues uniform in
/// `[eig_min, eig_max]`, sparse nonnegative `H` of full column rank, `G = I`,
/// and the LQR gain for `Q = I`, `R = I`.
pub fn gen_random_system(cfg: &LinearConfig, seed: u64) -> Result<LinearSystem> {
    let (n, m) = (cfg.states, cfg.sensors);
    if n < 2 || m <= n {
        return Err(Error::Generation(format!("need n >= 2 and m > n, got n={n}, m={m}")));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(Error::Generation(format!("density {} outside (0, 1]", cfg.density)));
    }
    if !(0.0 < cfg.eig_min && cfg.eig_min <= cfg.eig_max && cfg.eig_max < 1.0) {
        return Err(Error::Generation("eigenvalue range must lie in (0, 1)".into()));
    }
    if cfg.groups == 0 || cfg.groups > n {
        return Err(Error::Generation(format!("cannot split {n} states into {} groups", cfg.groups)));
    }
    let nnz = ((cfg.density * (m * n) as f64).ceil() as usize).max(n);
    let mut rng = rng_seeded(seed);
    let v = random_orthogonal(n, &mut rng);
    let eig = Uniform::new_inclusive(cfg.eig_min, cfg.eig_max).expect("valid range");
    let d = DVector::from_fn(n, |_, _| eig.sample(&mut rng));
    let a = &v * DMatrix::from_diagonal(&d) * v.transpose();
    let a = (&a + a.transpose()) * 0.5;

    let mut h = None;
    for _ in 0..cfg.max_retries.max(1) {
        let cand = random_sparse(m, n, nnz, &mut rng);
        if linalg::rank(&cand) == n {
            h = Some(cand);
            break;
        }
    }
    let h = h.ok_or_else(|| {
        Error::Generation(format!("no full-rank H after {} draws", cfg.max_retries))
    })?;

    let g = DMatrix::identity(n, n);
    let lqr = lqr_gain(&a, &g, &DMatrix::identity(n, n), &DMatrix::identity(n, n))?;
    LinearSystem::new(
        a,
        g,
        h,
        DMatrix::identity(n, n) * cfg.process_var,
        DVector::from_element(m, cfg.sensor_sigma),
        lqr.gain,
        contiguous_groups(n, cfg.groups),
    )
}

/// A covert attack on one group of the linear testbed.
#[derive(Debug, Clone)]
pub struct LinearAttack {
    pub group: usize,
    pub beta: DVector<f64>,
    pub onset: usize,
    pub mask: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LinearTick {
    pub t: usize,
    /// Physical state, shifted by the attack once it is active.
    pub state: DVector<f64>,
    pub z: DVector<f64>,
    pub attacked: bool,
}

/// Closed-loop simulation: measure, estimate by WLS, apply `u = -K x_hat`,
/// advance. Random draws happen in the same order with or without an attack,
/// so ticks before the onset match the attack-free stream exactly.
pub struct LinearSimulator<'a> {
    sys: &'a LinearSystem,
    model: LinearModel,
    wls: WlsSolver,
    attack: Option<LinearAttack>,
    rng: SimRng,
    x: DVector<f64>,
    t: usize,
}

impl<'a> LinearSimulator<'a> {
    pub fn new(sys: &'a LinearSystem, attack: Option<LinearAttack>, seed: u64) -> Result<Self> {
        if let Some(a) = &attack {
            let size = sys.groups.get(a.group).map(Vec::len).ok_or_else(|| {
                Error::Attack(format!("group {} does not exist", a.group))
            })?;
            if a.beta.len() != size {
                return Err(Error::dim("attack shift", size, a.beta.len()));
            }
        }
        Ok(Self {
            sys,
            model: sys.model(),
            wls: WlsSolver::new(&sys.h, &sys.sensor_sigma)?,
            attack,
            rng: rng_seeded(seed),
            x: DVector::zeros(sys.state_dim()),
            t: 0,
        })
    }

    pub fn with_initial_state(mut self, x0: DVector<f64>) -> Self {
        self.x = x0;
        self
    }

    pub fn next_tick(&mut self) -> Result<LinearTick> {
        self.t += 1;
        let noise = self.sys.sensor_noise(&mut self.rng);
        let active = self.attack.as_ref().filter(|a| self.t >= a.onset);
        let (z, state) = match active {
            Some(a) => {
                let CovertOutcome {
                    z_attacked,
                    x_attacked,
                    ..
                } = apply_covert_attack(
                    &self.model,
                    &self.x,
                    &noise,
                    &self.sys.groups[a.group],
                    &a.beta,
                    &a.mask,
                )?;
                (z_attacked, x_attacked)
            }
            None => (&self.sys.h * &self.x + &noise, self.x.clone()),
        };
        let u = -(&self.sys.gain * self.wls.estimate(&z));
        self.x = self.sys.step(&self.x, &u, &mut self.rng);
        Ok(LinearTick {
            t: self.t,
            state,
            z,
            attacked: active.is_some(),
        })
    }
}

impl Iterator for LinearSimulator<'_> {
    type Item = Result<LinearTick>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_tick())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_riccati() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let lqr = lqr_gain(&DMatrix::from_element(1, 1, 0.5), &one, &one, &one).unwrap();
        // positive root of P^2 - 0.25 P - 1 = 0
        let p = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((lqr.riccati[(0, 0)] - p).abs() < 1e-9);
        assert!((lqr.gain[(0, 0)] - 0.5 * p / (1.0 + p)).abs() < 1e-9);
        let zero = lqr_gain(&DMatrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert_eq!(zero.gain[(0, 0)], 0.0);
    }

    #[test]
    fn default_system_shape() {
        let sys = gen_random_system(&LinearConfig::default(), 1).unwrap();
        assert_eq!(sys.h.shape(), (30, 20));
        assert_eq!(linalg::rank(&sys.h), 20);
        assert_eq!(sys.h.iter().filter(|&&v| v != 0.0).count(), 120);
        assert!(sys.h.iter().all(|&v| v >= 0.0));
        assert!(linalg::spectral_radius(&sys.a) < 1.0);
        assert!(sys.a.clone().cholesky().is_some());
        assert_eq!(sys.a, sys.a.transpose());
        assert!(linalg::spectral_radius(&(&sys.a - &sys.g * &sys.gain)) < 1.0);
        assert_eq!(sys.groups, contiguous_groups(20, 4));
        assert_eq!(sys.groups[3], vec![15, 16, 17, 18, 19]);
    }

    #[test]
    fn dense_tiny_system() {
        let cfg = LinearConfig {
            states: 2,
            sensors: 3,
            density: 1.0,
            groups: 2,
            ..LinearConfig::default()
        };
        let sys = gen_random_system(&cfg, 5).unwrap();
        assert!(sys.h.iter().all(|&v| v > 0.0));
        assert_eq!(linalg::rank(&sys.h), 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = LinearConfig::default();
        let a = gen_random_system(&cfg, 9).unwrap();
        let b = gen_random_system(&cfg, 9).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.h, b.h);
        assert_eq!(a.gain, b.gain);
        let c = gen_random_system(&cfg, 10).unwrap();
        assert_ne!(a.h, c.h);
    }

    #[test]
    fn bad_dimensions_rejected() {
        let cfg = LinearConfig {
            sensors: 20,
            ..LinearConfig::default()
        };
        assert!(matches!(gen_random_system(&cfg, 1), Err(Error::Generation(_))));
        let cfg = LinearConfig {
            density: 0.0,
            ..LinearConfig::default()
        };
        assert!(gen_random_system(&cfg, 1).is_err());
    }

    #[test]
    fn connectivity_threshold() {
        let h = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.4, 0.4, 0.0, 0.0]);
        let m = connectivity(&h, &[vec![0], vec![1]], 0.5);
        assert_eq!(m, vec![vec![0], vec![]]);
    }

    #[test]
    fn noiseless_step_and_measure() {
        let mut sys = gen_random_system(&LinearConfig::default(), 2).unwrap();
        sys.process_chol.fill(0.0);
        sys.sensor_sigma.fill(0.0);
        let mut rng = rng_seeded(0);
        let zero = DVector::zeros(20);
        assert_eq!(sys.step(&zero, &zero, &mut rng), zero);
        let x = DVector::from_fn(20, |k, _| k as f64 * 0.1);
        assert_eq!(sys.step(&x, &zero, &mut rng), &sys.a * &x);
        assert_eq!(sys.measure(&x, &mut rng), &sys.h * &x);
    }

    #[test]
    fn sensor_noise_variance() {
        let sys = gen_random_system(&LinearConfig::default(), 3).unwrap();
        let mut rng = rng_seeded(4);
        let draws = 10_000;
        let mut ss = DVector::zeros(30);
        for _ in 0..draws {
            let v = sys.sensor_noise(&mut rng);
            ss += v.component_mul(&v);
        }
        for (s, sigma) in ss.iter().zip(sys.sensor_sigma.iter()) {
            let var = s / draws as f64;
            assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
        }
    }

    #[test]
    fn simulator_replays_pre_onset_ticks() {
        let sys = gen_random_system(&LinearConfig::default(), 6).unwrap();
        let mask = sys.connectivity(0.5)[1].clone();
        let attack = LinearAttack {
            group: 1,
            beta: DVector::from_element(5, 0.3),
            onset: 50,
            mask,
        };
        let clean: Vec<_> = LinearSimulator::new(&sys, None, 77)
            .unwrap()
            .take(60)
            .collect::<Result<_>>()
            .unwrap();
        let hit: Vec<_> = LinearSimulator::new(&sys, Some(attack), 77)
            .unwrap()
            .take(60)
            .collect::<Result<_>>()
            .unwrap();
        for t in 0..49 {
            assert_eq!(clean[t].z, hit[t].z);
            assert!(!hit[t].attacked);
        }
        assert!(hit[49].attacked);
        assert_ne!(clean[49].z, hit[49].z);
    }
}

//! Covert attacks: shift one generator bus's state, then replay the normal
//! readings on the sensors connected to it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimator::MeasurementModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMagnitude {
    /// Explicit state shift over the target's state indices.
    Beta(Vec<f64>),
    /// Shift size relative to the target's state covariance (linear testbed).
    Snr(f64),
    /// Generation cut of `20 * level` percent (nonlinear testbed), `1..=5`.
    Level(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub target_bus: usize,
    pub onset: usize,
    #[serde(flatten)]
    pub magnitude: AttackMagnitude,
}

impl AttackSpec {
    /// Rejects targets outside the attackable generator buses and malformed
    /// magnitudes.
    pub fn check(&self, candidates: &[usize], group_size: usize) -> Result<()> {
        if !candidates.contains(&self.target_bus) {
            return Err(Error::Attack(format!(
                "bus {} is not an attackable generator bus (candidates {candidates:?})",
                self.target_bus
            )));
        }
        match &self.magnitude {
            AttackMagnitude::Beta(b) if b.len() != group_size => Err(Error::Attack(format!(
                "shift has {} entries, target has {group_size} states",
                b.len()
            ))),
            AttackMagnitude::Snr(s) if !(*s >= 0.0) => {
                Err(Error::Attack("SNR must be non-negative".into()))
            }
            AttackMagnitude::Level(l) if !(1..=5).contains(l) => {
                Err(Error::Attack(format!("generation level {l} outside 1..=5")))
            }
            _ => Ok(()),
        }
    }

    pub fn active(&self, t: usize) -> bool {
        t >= self.onset
    }
}

/// Fraction of dispatched generation left at attack level `level`.
pub fn level_factor(level: u8) -> Result<f64> {
    if !(1..=5).contains(&level) {
        return Err(Error::Attack(format!("generation level {level} outside 1..=5")));
    }
    Ok(1.0 - 0.2 * f64::from(level))
}

#[derive(Debug, Clone)]
pub struct CovertOutcome {
    /// `h(x) + v`: what the sensors would read without the attack.
    pub z_normal: DVector<f64>,
    /// Masked sensors replay `z_normal`, all others see the shifted plant.
    pub z_attacked: DVector<f64>,
    /// `x` with the target's states shifted by `beta`.
    pub x_attacked: DVector<f64>,
}

/// Applies a covert attack on state indices `states` with shift `beta`.
///
/// Both readings share the noise realization `noise`, so masked entries of
/// `z_attacked` are bit-identical to `z_normal` and the rest are
/// bit-identical to `h(x + beta) + noise`.
pub fn apply_covert_attack<M: MeasurementModel>(
    model: &M,
    x_true: &DVector<f64>,
    noise: &DVector<f64>,
    states: &[usize],
    beta: &DVector<f64>,
    mask: &[usize],
) -> Result<CovertOutcome> {
    if beta.len() != states.len() {
        return Err(Error::dim("attack shift", states.len(), beta.len()));
    }
    if noise.len() != model.meas_dim() {
        return Err(Error::dim("noise vector", model.meas_dim(), noise.len()));
    }
    if let Some(&bad) = states.iter().find(|&&s| s >= model.state_dim()) {
        return Err(Error::Attack(format!("state index {bad} out of range")));
    }
    if let Some(&bad) = mask.iter().find(|&&j| j >= model.meas_dim()) {
        return Err(Error::Attack(format!("sensor index {bad} out of range")));
    }
    let z_normal = model.eval(x_true)? + noise;
    let mut x_attacked = x_true.clone();
    for (&s, &b) in states.iter().zip(beta.iter()) {
        x_attacked[s] += b;
    }
    let mut z_attacked = model.eval(&x_attacked)? + noise;
    for &j in mask {
        z_attacked[j] = z_normal[j];
    }
    Ok(CovertOutcome {
        z_normal,
        z_attacked,
        x_attacked,
    })
}

/// `sqrt(beta^T cov^-1 beta)`.
pub fn snr(beta: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if cov.nrows() != beta.len() || cov.ncols() != beta.len() {
        return Err(Error::dim("state covariance", beta.len(), cov.nrows()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("state covariance is not positive definite".into()))?;
    let y = chol.solve(beta);
    Ok(beta.dot(&y).max(0.0).sqrt())
}

/// Scales `direction` so that its SNR under `cov` equals `target`.
pub fn beta_from_snr(direction: &DVector<f64>, target: f64, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let unit = snr(direction, cov)?;
    if unit == 0.0 {
        return Err(Error::Attack("attack direction must be nonzero".into()));
    }
    Ok(direction * (target / unit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::LinearModel;
    use crate::rng::rng_seeded;
    use rand::Rng;

    fn toy() -> (LinearModel, DVector<f64>, DVector<f64>) {
        let mut rng = rng_seeded(10);
        let h = DMatrix::from_fn(8, 4, |_, _| rng.random_range(0.0..1.0));
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let noise = DVector::from_fn(8, |_, _| rng.random_range(-0.1..0.1));
        (LinearModel { h }, x, noise)
    }

    #[test]
    fn null_attack_is_transparent() {
        let (model, x, noise) = toy();
        let out = apply_covert_attack(&model, &x, &noise, &[2, 3], &DVector::zeros(2), &[0, 5]).unwrap();
        assert_eq!(out.z_attacked, out.z_normal);
        assert_eq!(out.x_attacked, x);
    }

    #[test]
    fn full_mask_hides_everything() {
        let (model, x, noise) = toy();
        let mask: Vec<usize> = (0..8).collect();
        let beta = DVector::from_vec(vec![5.0, -3.0]);
        let out = apply_covert_attack(&model, &x, &noise, &[0, 1], &beta, &mask).unwrap();
        assert_eq!(out.z_attacked, out.z_normal);
        assert_ne!(out.x_attacked, x);
    }

    #[test]
    fn masked_difference_is_the_basis_signature() {
        let (model, x, noise) = toy();
        let states = [1, 2];
        let mask = [0, 3, 6];
        let beta = DVector::from_vec(vec![0.7, -0.4]);
        let out = apply_covert_attack(&model, &x, &noise, &states, &beta, &mask).unwrap();
        // B_i = H[., S_i] with rows in M_i zeroed
        let mut basis = DMatrix::from_fn(8, 2, |j, k| model.h[(j, states[k])]);
        for &j in &mask {
            basis.row_mut(j).fill(0.0);
        }
        let diff = &out.z_attacked - &out.z_normal;
        assert!((diff - basis * beta).amax() < 1e-12);
        for &j in &mask {
            assert_eq!(out.z_attacked[j].to_bits(), out.z_normal[j].to_bits());
        }
    }

    #[test]
    fn snr_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert!((snr(&DVector::from_vec(vec![3.0, 4.0]), &i2).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(snr(&DVector::zeros(2), &i2).unwrap(), 0.0);
        let four = i2 * 4.0;
        assert!((snr(&DVector::from_vec(vec![2.0, 0.0]), &four).unwrap() - 1.0).abs() < 1e-15);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(snr(&DVector::from_vec(vec![1.0, 0.0]), &singular).is_err());
    }

    #[test]
    fn snr_round_trip_and_homogeneity() {
        let mut rng = rng_seeded(12);
        for _ in 0..100 {
            let p = rng.random_range(1..5);
            let f = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let cov = &f * f.transpose() + DMatrix::identity(p, p) * 0.1;
            let d = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let s = rng.random_range(0.0..10.0);
            let beta = beta_from_snr(&d, s, &cov).unwrap();
            assert!((snr(&beta, &cov).unwrap() - s).abs() < 1e-10 * s.max(1.0));
            // parallel to the direction
            let cos = beta.dot(&d) / (beta.norm() * d.norm()).max(f64::MIN_POSITIVE);
            assert!(s == 0.0 || (cos - 1.0).abs() < 1e-12);
            let doubled = beta_from_snr(&d, 2.0 * s, &cov).unwrap();
            assert!((snr(&doubled, &cov).unwrap() - 2.0 * snr(&beta, &cov).unwrap()).abs() < 1e-9);
        }
        assert_eq!(
            beta_from_snr(&DVector::from_vec(vec![1.0, 1.0]), 0.0, &DMatrix::identity(2, 2)).unwrap(),
            DVector::zeros(2)
        );
    }

    #[test]
    fn spec_validation() {
        let spec = AttackSpec {
            target_bus: 4,
            onset: 10,
            magnitude: AttackMagnitude::Level(3),
        };
        assert!(matches!(spec.check(&[2, 3, 6, 8], 2), Err(Error::Attack(_))));
        let ok = AttackSpec { target_bus: 3, ..spec.clone() };
        assert!(ok.check(&[2, 3, 6, 8], 2).is_ok());
        let bad_level = AttackSpec {
            magnitude: AttackMagnitude::Level(6),
            ..ok.clone()
        };
        assert!(bad_level.check(&[2, 3, 6, 8], 2).is_err());
        assert!(!ok.active(9) && ok.active(10));
        assert!((level_factor(5).unwrap()).abs() < 1e-15);
        assert!((level_factor(1).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn spec_serde_shape() {
        let spec: AttackSpec = serde_json::from_str(r#"{"target_bus": 6, "onset": 1000, "level": 5}"#).unwrap();
        assert_eq!(spec.magnitude, AttackMagnitude::Level(5));
        let spec: AttackSpec = serde_json::from_str(r#"{"target_bus": 2, "onset": 1, "snr": 3.0}"#).unwrap();
        assert_eq!(spec.magnitude, AttackMagnitude::Snr(3.0));
    }
}

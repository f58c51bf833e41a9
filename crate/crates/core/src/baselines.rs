//! Comparison methods: the chi-square bad-data detector and leave-group-out
//! hypothesis-testing localization.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::detector::GroupSpec;
use crate::estimator::{newton_se, EstimationResult, MeasurementModel, NewtonOptions, RowSubset};
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSqConfig {
    pub dof: usize,
    pub significance: f64,
    pub threshold: f64,
}

impl ChiSqConfig {
    /// Threshold at the `1 - significance` quantile of chi-square(`m - n`).
    pub fn new(meas_dim: usize, state_dim: usize, significance: f64) -> Result<Self> {
        if meas_dim <= state_dim {
            return Err(Error::Validation(format!(
                "chi-square test needs m > n, got m={meas_dim}, n={state_dim}"
            )));
        }
        if !(significance > 0.0 && significance < 1.0) {
            return Err(Error::Validation(format!("significance {significance} outside (0, 1)")));
        }
        let dof = meas_dim - state_dim;
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self {
            dof,
            significance,
            threshold: dist.inverse_cdf(1.0 - significance),
        })
    }

    pub fn alarm(&self, chi2: f64) -> bool {
        chi2 > self.threshold
    }
}

/// `r^T Sigma^-1 r > threshold`.
pub fn chi_square_alarm(result: &EstimationResult, cfg: &ChiSqConfig) -> bool {
    cfg.alarm(result.chi2)
}

#[derive(Debug, Clone)]
pub struct HtOutcome {
    pub location: usize,
    /// `(group id, chi2 with M_i removed)`; `None` for skipped candidates.
    pub chi2: Vec<(usize, Option<f64>)>,
    /// `(group id, residual degrees of freedom, normalized score)`.
    pub scores: Vec<(usize, usize, f64)>,
}

/// Wilson-Hilferty transform of a chi-square(`dof`) value to an approximately
/// standard normal score. Monotone in the upper-tail probability, without
/// underflow for large values.
pub fn chi2_score(value: f64, dof: usize) -> f64 {
    let k = dof as f64;
    let c = 2.0 / (9.0 * k);
    ((value / k).cbrt() - (1.0 - c)) / c.sqrt()
}

/// Removes each candidate's sensors `M_i` in turn, re-estimates, and picks
/// the candidate whose reduced fit is most plausible: the smallest chi-square
/// score given its residual degrees of freedom. When the
/// remaining sensors do not observe every state the chi-square is the minimum
/// over all consistent states; candidates with no residual degrees of freedom
/// left are skipped.
pub fn ht_localize<M: MeasurementModel>(
    model: &M,
    z: &DVector<f64>,
    sigma: &DVector<f64>,
    candidates: &[GroupSpec],
    x_init: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<HtOutcome> {
    if z.len() != model.meas_dim() || sigma.len() != model.meas_dim() {
        return Err(Error::dim("measurement vector", model.meas_dim(), z.len()));
    }
    let mut best: Option<(f64, usize)> = None;
    let mut chi2 = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    let jac = model.jacobian(x_init)?;
    for g in candidates {
        let keep: Vec<usize> = (0..model.meas_dim()).filter(|j| !g.mask.contains(j)).collect();
        let rank = linalg::rank(&linalg::select_rows(&jac, &keep));
        if keep.len() <= rank {
            log::debug!("candidate {} skipped: no residual degrees of freedom left", g.id);
            chi2.push((g.id, None));
            continue;
        }
        let reduced = RowSubset {
            inner: model,
            rows: &keep,
        };
        let zr = linalg::select_entries(z, &keep);
        let sr = linalg::select_entries(sigma, &keep);
        let value = if rank == model.state_dim() {
            newton_se(&reduced, &zr, &sr, x_init, opts)?.chi2
        } else {
            min_norm_chi2(&reduced, &zr, &sr, x_init, opts)?
        };
        chi2.push((g.id, Some(value)));
        let dof = keep.len() - rank;
        let score = chi2_score(value, dof);
        scores.push((g.id, dof, score));
        let better = match best {
            None => true,
            Some((v, id)) => score < v || (score == v && g.id < id),
        };
        if better {
            best = Some((score, g.id));
        }
    }
    match best {
        Some((_, location)) => Ok(HtOutcome { location, chi2, scores }),
        None => Err(Error::Localization(
            "no candidate leaves an observable sensor set".into(),
        )),
    }
}

/// Minimum of `(z - h(x))^T Sigma^-1 (z - h(x))` when the design does not
/// observe every state: Gauss-Newton with minimum-norm steps.
fn min_norm_chi2<M: MeasurementModel>(
    model: &M,
    z: &DVector<f64>,
    sigma: &DVector<f64>,
    x_init: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<f64> {
    let w = sigma.map(|s| 1.0 / s);
    let mut x = x_init.clone();
    let mut rw = (z - model.eval(&x)?).component_mul(&w);
    for _ in 0..opts.max_iter {
        let jw = linalg::scale_rows(&model.jacobian(&x)?, &w);
        let svd = jw.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = jw_tol(z.len(), x.len(), smax);
        let dx = svd
            .solve(&rw, tol)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        x += &dx;
        rw = (z - model.eval(&x)?).component_mul(&w);
        if linalg::inf_norm(&dx) < opts.tol {
            break;
        }
    }
    Ok(rw.norm_squared())
}

fn jw_tol(m: usize, n: usize, smax: f64) -> f64 {
    m.max(n) as f64 * f64::EPSILON * smax * 1e3
}

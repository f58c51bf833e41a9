//! State estimation: weighted least squares for linear models and damped
//! Gauss-Newton for the AC measurement function.

use nalgebra::{DMatrix, DVector};

use crate::{linalg, Error, Result};

/// A measurement function over flattened states.
pub trait MeasurementModel {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `h(x) = H x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub h: DMatrix<f64>,
}

impl MeasurementModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.h.ncols() {
            return Err(Error::dim("state vector", self.h.ncols(), x.len()));
        }
        Ok(&self.h * x)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }
}

/// A model restricted to a subset of its sensors.
pub struct RowSubset<'a, M: MeasurementModel> {
    pub inner: &'a M,
    pub rows: &'a [usize],
}

impl<M: MeasurementModel> MeasurementModel for RowSubset<'_, M> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn meas_dim(&self) -> usize {
        self.rows.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(linalg::select_entries(&self.inner.eval(x)?, self.rows))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(linalg::select_rows(&self.inner.jacobian(x)?, self.rows))
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub state: DVector<f64>,
    /// `z - h(x_hat)`.
    pub residual: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `r^T Sigma^-1 r`.
    pub chi2: f64,
}

fn weighted_ss(r: &DVector<f64>, sigma: &DVector<f64>) -> f64 {
    r.iter().zip(sigma.iter()).map(|(v, s)| (v / s).powi(2)).sum()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dim(what, expected, got));
    }
    Ok(())
}

/// Weighted least squares for `z = H x + v`, `v ~ N(0, diag(sigma^2))`.
pub fn wls_linear(
    h: &DMatrix<f64>,
    z: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<EstimationResult> {
    check_len("measurement vector", h.nrows(), z.len())?;
    check_len("noise levels", h.nrows(), sigma.len())?;
    let w = sigma.map(|s| 1.0 / s);
    let hw = linalg::scale_rows(h, &w);
    let zw = z.component_mul(&w);
    let state = linalg::lstsq(&hw, &zw)?;
    let residual = z - h * &state;
    let chi2 = weighted_ss(&residual, sigma);
    Ok(EstimationResult {
        state,
        residual,
        iterations: 1,
        converged: true,
        chi2,
    })
}

/// Precomputed WLS projector for a fixed `H` and noise level, used when the
/// same model is estimated every tick.
#[derive(Debug, Clone)]
pub struct WlsSolver {
    h: DMatrix<f64>,
    sigma: DVector<f64>,
    // x_hat = gain * z
    gain: DMatrix<f64>,
}

impl WlsSolver {
    pub fn new(h: &DMatrix<f64>, sigma: &DVector<f64>) -> Result<Self> {
        check_len("noise levels", h.nrows(), sigma.len())?;
        let w = sigma.map(|s| 1.0 / s);
        let hw = linalg::scale_rows(h, &w);
        let gain = linalg::lstsq_multi(&hw, &DMatrix::from_diagonal(&w))?;
        Ok(Self {
            h: h.clone(),
            sigma: sigma.clone(),
            gain,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn estimate(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.gain * z
    }

    /// `b - H G b`: the part of each column of `b` the estimator cannot
    /// absorb into the state.
    pub fn unexplained(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        b - &self.h * (&self.gain * b)
    }

    pub fn solve(&self, z: &DVector<f64>) -> EstimationResult {
        let state = self.estimate(z);
        let residual = z - &self.h * &state;
        let chi2 = weighted_ss(&residual, &self.sigma);
        EstimationResult {
            state,
            residual,
            iterations: 1,
            converged: true,
            chi2,
        }
    }

    /// Covariance of the estimation error, `(H^T Sigma^-1 H)^-1`.
    pub fn error_covariance(&self) -> DMatrix<f64> {
        let s2 = self.sigma.map(|s| s * s);
        let mut out = DMatrix::zeros(self.gain.nrows(), self.gain.nrows());
        for j in 0..self.gain.ncols() {
            let c = self.gain.column(j);
            out += c * c.transpose() * s2[j];
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

/// Damped Gauss-Newton on `min (z - h(x))^T Sigma^-1 (z - h(x))`.
///
/// The update `x <- x + (J^T W J)^-1 J^T W (z - h(x))` is computed by QR on
/// the whitened Jacobian and halved until the objective does not increase.
/// Stops when the accepted step's infinity norm drops below `tol`; the final
/// negligible step is not counted in `iterations`. Running out of iterations
/// is reported through `converged = false` with the best iterate.
pub fn newton_se<M: MeasurementModel>(
    model: &M,
    z: &DVector<f64>,
    sigma: &DVector<f64>,
    x_init: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<EstimationResult> {
    check_len("measurement vector", model.meas_dim(), z.len())?;
    check_len("noise levels", model.meas_dim(), sigma.len())?;
    check_len("initial state", model.state_dim(), x_init.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::Numerical("tolerance must be positive".into()));
    }
    let w = sigma.map(|s| 1.0 / s);
    let mut x = x_init.clone();
    let mut residual = z - model.eval(&x)?;
    let mut objective = weighted_ss(&residual, sigma);
    let mut steps = 0;
    for _ in 0..opts.max_iter {
        let jw = linalg::scale_rows(&model.jacobian(&x)?, &w);
        let rw = residual.component_mul(&w);
        let dx = linalg::lstsq(&jw, &rw)?;
        let size = linalg::inf_norm(&dx);
        if size < opts.tol {
            return Ok(EstimationResult {
                state: x,
                residual,
                iterations: steps,
                converged: true,
                chi2: objective,
            });
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &x + &dx * t;
            let r = z - model.eval(&trial)?;
            let obj = weighted_ss(&r, sigma);
            if obj <= objective {
                x = trial;
                residual = r;
                objective = obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent along the Gauss-Newton direction: stationary to
            // working precision
            return Ok(EstimationResult {
                state: x,
                residual,
                iterations: steps,
                converged: size * t < opts.tol * 1e3,
                chi2: objective,
            });
        }
        steps += 1;
        if size * t < opts.tol {
            return Ok(EstimationResult {
                state: x,
                residual,
                iterations: steps,
                converged: true,
                chi2: objective,
            });
        }
    }
    Ok(EstimationResult {
        state: x,
        residual,
        iterations: steps,
        converged: false,
        chi2: objective,
    })
}

/// `r^T Sigma^-1 r` of an estimation result.
pub fn residual_stat(result: &EstimationResult, sigma: &DVector<f64>) -> f64 {
    weighted_ss(&result.residual, sigma)
}

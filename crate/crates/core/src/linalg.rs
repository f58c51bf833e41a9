//! Small dense linear-algebra helpers shared by the estimators and testbeds.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Numerical rank from singular values, relative tolerance `max(m, n) * eps * s_max`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_entry(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Scales row `j` of `a` by `w[j]`.
pub fn scale_rows(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (j, mut row) in out.row_iter_mut().enumerate() {
        row *= w[j];
    }
    out
}

/// Rows of `a` selected by `rows`, in the given order.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Solves `min ||a x - b||_2` by Householder QR. Fails when `a` is numerically
/// column-rank deficient; the error lists the columns spanning the null space.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = lstsq_multi(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// [`lstsq`] for every column of `b`, sharing one factorization.
pub fn lstsq_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    if a.nrows() != b.nrows() {
        return Err(Error::dim("least-squares right-hand side", a.nrows(), b.nrows()));
    }
    if a.nrows() < n {
        return Err(Error::Estimation {
            message: format!("{} equations for {} unknowns", a.nrows(), n),
            columns: deficient_columns(a),
        });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let rmax = (0..n).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    let tol = a.nrows().max(n) as f64 * f64::EPSILON * rmax.max(f64::MIN_POSITIVE) * 1e3;
    if (0..n).any(|k| r[(k, k)].abs() <= tol) {
        return Err(Error::Estimation {
            message: "normal matrix is singular".into(),
            columns: deficient_columns(a),
        });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let qtb = qtb.rows(0, n).into_owned();
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

/// Columns with a significant component in the numerical null space of `a`.
pub fn deficient_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.ncols();
    if n == 0 {
        return Vec::new();
    }
    // Pad with zero rows so the SVD exposes all n right singular vectors.
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let rows = padded.nrows();
    let svd = padded.svd(false, true);
    let Some(vt) = svd.v_t else {
        return Vec::new();
    };
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rows.max(n) as f64 * f64::EPSILON * smax.max(f64::MIN_POSITIVE) * 1e3;
    let mut cols = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            for j in 0..n {
                if vt[(k, j)].abs() > 1e-6 && !cols.contains(&j) {
                    cols.push(j);
                }
            }
        }
    }
    cols.sort_unstable();
    cols
}

/// Upper empirical quantile: the `ceil(q * len)`-th smallest value.
pub fn upper_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[k - 1])
}

/// Solves the discrete Lyapunov equation `X = F X F^T + W` by doubling.
pub fn discrete_lyapunov(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if spectral_radius(f) >= 1.0 {
        return Err(Error::Numerical(
            "discrete Lyapunov equation needs a stable matrix".into(),
        ));
    }
    let mut x = w.clone();
    let mut a = f.clone();
    for _ in 0..64 {
        let next = &x + &a * &x * a.transpose();
        let delta = max_abs_entry(&(&next - &x));
        x = next;
        a = &a * &a;
        if delta <= 1e-15 * max_abs_entry(&x).max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Numerical("Lyapunov doubling did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_columns() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&a), 2);
        assert_eq!(rank(&DMatrix::identity(4, 4)), 4);
    }

    #[test]
    fn lstsq_reports_deficient_columns() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        match lstsq(&a, &b) {
            Err(Error::Estimation { columns, .. }) => assert_eq!(columns, vec![0, 2]),
            other => panic!("expected estimation error, got {other:?}"),
        }
    }

    #[test]
    fn quantile_semantics() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(upper_quantile(&v, 0.5), Some(5.0));
        assert_eq!(upper_quantile(&v, 0.95), Some(10.0));
        assert_eq!(upper_quantile(&v, 0.0), Some(1.0));
        assert_eq!(upper_quantile(&[], 0.5), None);
    }

    #[test]
    fn lyapunov_scalar() {
        let f = DMatrix::from_element(1, 1, 0.5);
        let w = DMatrix::from_element(1, 1, 1.0);
        let x = discrete_lyapunov(&f, &w).unwrap();
        assert!((x[(0, 0)] - 1.0 / 0.75).abs() < 1e-12);
    }
}

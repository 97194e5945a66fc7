//! Multiple linear regression fitted by Householder QR.
//!
//! The solver minimizes `‖y − β₀ − Xβ‖²` on the augmented system
//! `[X̃; √ridge_eps·I]`, which equals ridge regression on the normal
//! equations `(X̃ᵀX̃ + ridge_eps·I)β = X̃ᵀy` but avoids squaring the
//! condition number. `ridge_eps = 0` is exact least squares and fails with
//! [`ForecastError::DegenerateDesign`] on rank-deficient input; the small
//! default keeps one-hot blocks (which sum to the intercept) solvable.

use super::{ForecastError, SupervisedSet};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;

/// Fitted coefficients; `beta[0]` is the intercept, `beta[1 + j]` pairs
/// with `columns[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
}

/// Dense column-major least-squares workspace.
struct Augmented {
    /// `a[j * m + i]` is row `i` of column `j`.
    a: Vec<f64>,
    b: Vec<f64>,
    m: usize,
    k: usize,
}

fn householder_lsq(mut s: Augmented, tol: f64) -> Result<Vec<f64>, ForecastError> {
    let (m, k) = (s.m, s.k);
    let col = |j: usize| j * m;
    let mut v = vec![0.0; m];
    for j in 0..k {
        let base = col(j);
        let sigma: f64 = (j..m).map(|i| s.a[base + i] * s.a[base + i]).sum();
        let norm = sigma.sqrt();
        if norm <= tol {
            return Err(ForecastError::DegenerateDesign);
        }
        let pivot = s.a[base + j];
        let alpha = if pivot > 0.0 { -norm } else { norm };
        v[j] = pivot - alpha;
        for i in j + 1..m {
            v[i] = s.a[base + i];
        }
        let vtv: f64 = (j..m).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            return Err(ForecastError::DegenerateDesign);
        }
        s.a[base + j] = alpha;
        for i in j + 1..m {
            s.a[base + i] = 0.0;
        }
        for l in j + 1..k {
            let lbase = col(l);
            let dot: f64 = (j..m).map(|i| v[i] * s.a[lbase + i]).sum();
            let w = 2.0 * dot / vtv;
            for i in j..m {
                s.a[lbase + i] -= w * v[i];
            }
        }
        let dot: f64 = (j..m).map(|i| v[i] * s.b[i]).sum();
        let w = 2.0 * dot / vtv;
        for i in j..m {
            s.b[i] -= w * v[i];
        }
    }
    // Back-substitution on the upper-triangular R block.
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut acc = s.b[j];
        for l in j + 1..k {
            acc -= s.a[col(l) + j] * beta[l];
        }
        let diag = s.a[col(j) + j];
        if diag.abs() <= tol {
            return Err(ForecastError::DegenerateDesign);
        }
        beta[j] = acc / diag;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(ForecastError::DegenerateDesign);
    }
    Ok(beta)
}

pub fn fit_linreg(set: &SupervisedSet, ridge_eps: f64) -> Result<LinRegModel, ForecastError> {
    if !ridge_eps.is_finite() || ridge_eps < 0.0 {
        return Err(ForecastError::InvalidConfig(
            "ridge_eps must be finite and ≥ 0".into(),
        ));
    }
    let n = set.n_rows();
    let p = set.n_cols();
    let k = p + 1;
    if n == 0 {
        return Err(ForecastError::EmptySet);
    }
    if n < k {
        return Err(ForecastError::TooFewRows { rows: n, needed: k });
    }
    let m = if ridge_eps > 0.0 { n + k } else { n };
    let mut a = vec![0.0; m * k];
    for i in 0..n {
        a[i] = 1.0;
        let row = set.row(i);
        for j in 0..p {
            a[(j + 1) * m + i] = row[j];
        }
    }
    if ridge_eps > 0.0 {
        let shrink = ridge_eps.sqrt();
        for j in 0..k {
            a[j * m + n + j] = shrink;
        }
    }
    let mut b = vec![0.0; m];
    b[..n].copy_from_slice(set.targets());

    let max_col_norm = (0..k)
        .map(|j| (0..m).map(|i| a[j * m + i] * a[j * m + i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = (max_col_norm * 1e-12).max(f64::MIN_POSITIVE);
    let beta = householder_lsq(Augmented { a, b, m, k }, tol)?;
    Ok(LinRegModel {
        columns: set.columns().to_vec(),
        beta,
    })
}

pub fn predict_linreg(model: &LinRegModel, set: &SupervisedSet) -> Result<Vec<f64>, ForecastError> {
    if model.columns != set.columns() {
        return Err(ForecastError::SchemaMismatch(format!(
            "model was fitted on {} columns, rows provide {}",
            model.columns.len(),
            set.n_cols()
        )));
    }
    Ok(set
        .rows()
        .map(|row| {
            model.beta[0]
                + row
                    .iter()
                    .zip(&model.beta[1..])
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
        })
        .collect())
}

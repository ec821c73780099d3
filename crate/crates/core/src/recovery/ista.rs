//! Iterative soft-thresholding for the LASSO
//! `min ½‖Aθ − b‖² + λ‖θ‖₁`.

use nalgebra::{DMatrix, DVector};

use super::SparseSolution;
use crate::error::{Error, Result};

/// Magnitude below which an ISTA coefficient is treated as zero.
pub const SUPPORT_EPS: f64 = 1e-8;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaOptions {
    /// Absolute regularization weight λ.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `‖θₖ₊₁ − θₖ‖∞ ≤ tol · max(1, ‖θₖ₊₁‖∞)`.
    pub tol: f64,
    /// Keep only the `k` largest magnitudes when the target count is known.
    pub top_k: Option<usize>,
}

/// Largest eigenvalue of `AᵀA` (the squared spectral norm) by power iteration.
pub fn largest_squared_singular_value(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let converged = (norm - estimate).abs() <= POWER_TOL * norm;
        estimate = norm;
        if converged {
            break;
        }
    }
    estimate
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lasso_objective(a: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (a * theta - b).norm_squared() + lambda * theta.abs().sum()
}

/// Runs ISTA from zero with step `1/‖A‖²`. On hitting `max_iters` the last
/// iterate is returned with `converged = false`.
pub fn ista_lasso(a: &DMatrix<f64>, b: &DVector<f64>, opts: &IstaOptions) -> Result<SparseSolution> {
    if b.len() != a.nrows() {
        return Err(Error::Shape(format!(
            "measurement has {} entries, dictionary has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if !(opts.lambda > 0.0) {
        return Err(Error::Solver("lambda must be > 0".into()));
    }
    let lipschitz = largest_squared_singular_value(a);
    if lipschitz == 0.0 {
        return Err(Error::EmptyDictionary);
    }
    let step = 1.0 / lipschitz;
    let atb = a.tr_mul(b);
    let mut theta = DVector::zeros(a.ncols());
    let mut history = vec![lasso_objective(a, b, &theta, opts.lambda)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let grad = a.tr_mul(&(a * &theta)) - &atb;
        let next = (&theta - grad * step).map(|x| soft_threshold(x, step * opts.lambda));
        let change = (&next - &theta).amax();
        let scale = next.amax().max(1.0);
        theta = next;
        history.push(lasso_objective(a, b, &theta, opts.lambda));
        if change <= opts.tol * scale {
            converged = true;
            break;
        }
    }

    let mut support: Vec<usize> = (0..theta.len()).filter(|&i| theta[i].abs() > SUPPORT_EPS).collect();
    if let Some(k) = opts.top_k {
        // Descending magnitude, lower index first on ties.
        support.sort_by(|&x, &y| theta[y].abs().total_cmp(&theta[x].abs()));
        support.truncate(k);
        support.sort_unstable();
        let keep: Vec<bool> = (0..theta.len()).map(|i| support.contains(&i)).collect();
        for (i, v) in theta.iter_mut().enumerate() {
            if !keep[i] {
                *v = 0.0;
            }
        }
    }
    let residual = a * &theta - b;
    Ok(SparseSolution {
        coefficients: support.iter().map(|&i| theta[i]).collect(),
        support,
        residual_norm: residual.norm(),
        iterations,
        residual_history: history,
        rank_skips: 0,
        converged,
    })
}

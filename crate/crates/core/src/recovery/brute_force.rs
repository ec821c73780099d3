use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::lstsq;
use super::SparseSolution;
use crate::error::{Error, Result};

/// Largest number of subsets the exhaustive search will visit.
pub const SUBSET_BUDGET: u64 = 1_000_000;

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k);
    (0..k).try_fold(1u64, |acc, i| {
        acc.checked_mul((n - i) as u64).map(|v| v / (i as u64 + 1))
    })
}

/// Exhaustive best `k`-subset by least-squares residual. Ties keep the
/// lexicographically first subset; rank-deficient subsets are skipped.
pub fn brute_force_support(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Result<SparseSolution> {
    let n = a.ncols();
    if b.len() != a.nrows() {
        return Err(Error::Shape(format!(
            "measurement has {} entries, dictionary has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Solver(format!("sparsity {k} must be in 1..={n}")));
    }
    match binomial(n, k) {
        Some(count) if count <= SUBSET_BUDGET => {}
        _ => {
            return Err(Error::Budget {
                n,
                k,
                budget: SUBSET_BUDGET,
            })
        }
    }

    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    for subset in (0..n).combinations(k) {
        let Some(f) = lstsq::fit(a, &subset, b) else {
            continue;
        };
        let r = f.residual.norm();
        if best.as_ref().is_none_or(|(br, _, _)| r < *br) {
            best = Some((r, subset, f.coefficients));
        }
    }
    let (residual_norm, support, coefficients) =
        best.ok_or_else(|| Error::Solver("every subset is rank deficient".into()))?;
    Ok(SparseSolution {
        coefficients: coefficients.iter().copied().collect(),
        iterations: 1,
        residual_history: vec![residual_norm],
        support,
        residual_norm,
        rank_skips: 0,
        converged: true,
    })
}

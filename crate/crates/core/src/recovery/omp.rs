//! Orthogonal matching pursuit.
//!
//! Selection uses correlations against unit-normalized columns; the
//! coefficients are refit by unnormalized least squares after every pick.
//! Ties go to the lowest column index.

use nalgebra::{DMatrix, DVector};

use super::lstsq;
use super::SparseSolution;
use crate::error::{Error, Result};

fn check_inputs(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::Shape(format!(
            "measurement has {} entries, dictionary has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if k == 0 || k > a.nrows() || k > a.ncols() {
        return Err(Error::Solver(format!(
            "sparsity {k} must be in 1..=min(rows {}, cols {})",
            a.nrows(),
            a.ncols()
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if norms.iter().all(|&n| n == 0.0) {
        return Err(Error::EmptyDictionary);
    }
    if b.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMeasurement);
    }
    Ok(norms)
}

fn run(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_k: usize,
    stop_below: Option<f64>,
) -> Result<SparseSolution> {
    let norms = check_inputs(a, b, max_k)?;
    let mut support: Vec<usize> = Vec::with_capacity(max_k);
    let mut coefficients = DVector::zeros(0);
    let mut residual = b.clone();
    let mut history = Vec::with_capacity(max_k);
    let mut rank_skips = 0;

    while support.len() < max_k {
        if let Some(limit) = stop_below {
            if residual.norm() <= limit {
                break;
            }
        }
        let correlations = a.tr_mul(&residual);
        let mut candidates: Vec<(usize, f64)> = (0..a.ncols())
            .filter(|c| norms[*c] > 0.0 && !support.contains(c))
            .map(|c| (c, correlations[c].abs() / norms[c]))
            .collect();
        // Stable sort keeps the lower index first among equal scores.
        candidates.sort_by(|x, y| y.1.total_cmp(&x.1));

        let mut accepted = false;
        for (c, _) in candidates {
            let mut trial = support.clone();
            trial.push(c);
            match lstsq::fit(a, &trial, b) {
                Some(f) => {
                    support = trial;
                    coefficients = f.coefficients;
                    residual = f.residual;
                    accepted = true;
                    break;
                }
                None => rank_skips += 1,
            }
        }
        if !accepted {
            return Err(Error::Solver(format!(
                "no linearly independent column left after {} selections",
                support.len()
            )));
        }
        history.push(residual.norm());
    }

    Ok(SparseSolution {
        residual_norm: residual.norm(),
        iterations: support.len(),
        coefficients: coefficients.iter().copied().collect(),
        support,
        residual_history: history,
        rank_skips,
        converged: true,
    })
}

/// Runs exactly `k` greedy selections.
pub fn omp(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Result<SparseSolution> {
    run(a, b, k, None)
}

/// Greedy selections until the residual norm drops to `threshold` or
/// `max_k` columns are chosen, for when the target count is unknown.
pub fn omp_until_residual(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_k: usize,
    threshold: f64,
) -> Result<SparseSolution> {
    run(a, b, max_k, Some(threshold))
}

/// Residual stopping level `3σ√M_eff` for unknown-K recovery.
pub fn unknown_k_threshold(noise_std: f64, measurements: usize) -> f64 {
    3.0 * noise_std * (measurements as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::brute_force_support;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn identity_unit_vector() {
        let a = DMatrix::identity(6, 6);
        let mut b = DVector::zeros(6);
        b[3] = 1.0;
        let s = omp(&a, &b, 1).unwrap();
        assert_eq!(s.support, vec![3]);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-15);
        assert!(s.residual_norm < 1e-15);
    }

    #[test]
    fn two_sparse_recovery_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = gaussian(12, 20, &mut rng);
        let b = a.column(2) + a.column(5);
        let s = omp(&a, &b, 2).unwrap();
        assert_eq!(s.sorted_support(), vec![2, 5]);
        let oracle = brute_force_support(&a, &b, 2).unwrap();
        assert_eq!(oracle.sorted_support(), s.sorted_support());
    }

    #[test]
    fn degenerate_inputs() {
        let a = DMatrix::identity(3, 3);
        let zero = DVector::zeros(3);
        assert!(matches!(omp(&a, &zero, 1), Err(Error::ZeroMeasurement)));
        let b = DVector::from_element(3, 1.0);
        assert!(matches!(omp(&DMatrix::zeros(3, 3), &b, 1), Err(Error::EmptyDictionary)));
        assert!(omp(&a, &b, 4).is_err());
        assert!(omp(&a, &b, 0).is_err());
    }

    #[test]
    fn duplicate_column_is_skipped() {
        // Columns 0 and 1 are identical. After the first pick every score is
        // zero, so the tie goes to the copy, which must be skipped.
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let b = a.column(0) * 2.0;
        let s = omp(&a, &b, 2).unwrap();
        assert_eq!(s.sorted_support(), vec![0, 2]);
        assert!(s.rank_skips >= 1);
    }

    #[test]
    fn residual_threshold_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(16, 30, &mut rng);
        let b = a.column(7) * 3.0;
        let s = omp_until_residual(&a, &b, 5, 1e-9).unwrap();
        assert_eq!(s.support, vec![7]);
        assert!((unknown_k_threshold(0.5, 16) - 6.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn residual_orthogonal_and_monotone(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(10, 25, &mut rng);
            let b = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = omp(&a, &b, k).unwrap();
            prop_assert_eq!(s.support.len(), k);
            prop_assert!(s.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let coef = DVector::from_vec(s.coefficients.clone());
            let r = &b - a.select_columns(&s.support) * coef;
            for &c in &s.support {
                let dot = a.column(c).dot(&r);
                prop_assert!(dot.abs() <= 1e-9 * a.column(c).norm() * b.norm());
            }
        }

        #[test]
        fn selection_ignores_positive_column_scaling(seed in any::<u64>(), col in 0usize..25, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(10, 25, &mut rng);
            let b = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut scaled = a.clone();
            scaled.column_mut(col).scale_mut(scale);
            let s1 = omp(&a, &b, 4).unwrap();
            let s2 = omp(&scaled, &b, 4).unwrap();
            prop_assert_eq!(s1.support, s2.support);
        }
    }
}

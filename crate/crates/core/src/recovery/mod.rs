//! Sparse recovery solvers and the CSM / CoCSM localization pipelines.

mod brute_force;
mod ista;
mod lstsq;
mod omp;

pub use brute_force::{brute_force_support, SUBSET_BUDGET};
pub use ista::{ista_lasso, largest_squared_singular_value, lasso_objective, IstaOptions, SUPPORT_EPS};
pub use omp::{omp, omp_until_residual, unknown_k_threshold};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::{FingerprintJ, FingerprintPsi, PairIndexMap};
use crate::error::{Error, Result};
use crate::measurement::{remove_noise_floor, MeasurementModel, MeasurementVector};
use crate::scenario::{GridModel, Point2, SceneConfig, Scheme, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseSolution {
    /// Selected indices. OMP reports them in selection order.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Residual norm after each OMP selection, or the LASSO objective per
    /// ISTA iteration (starting from θ = 0).
    pub residual_history: Vec<f64>,
    /// Candidates rejected because they made the selection rank deficient.
    pub rank_skips: usize,
    pub converged: bool,
}

impl SparseSolution {
    pub fn sorted_support(&self) -> Vec<usize> {
        let mut s = self.support.clone();
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// ISTA λ as a fraction of `‖Aᵀb‖∞`.
    pub ista_lambda: f64,
    pub ista_max_iters: usize,
    pub ista_tol: f64,
    /// OMP residual stop for unknown target counts; `None` runs K picks.
    pub residual_stop: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::from(&SceneConfig::default())
    }
}

impl From<&SceneConfig> for SolverConfig {
    fn from(cfg: &SceneConfig) -> Self {
        Self {
            kind: cfg.solver,
            ista_lambda: cfg.ista_lambda,
            ista_max_iters: cfg.ista_max_iters,
            ista_tol: cfg.ista_tol,
            residual_stop: None,
        }
    }
}

/// Dispatches to the configured solver for a `k`-sparse recovery.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, k: usize, solver: &SolverConfig) -> Result<SparseSolution> {
    match solver.kind {
        SolverKind::Omp => match solver.residual_stop {
            Some(t) => omp_until_residual(a, b, k, t),
            None => omp(a, b, k),
        },
        SolverKind::Ista => {
            let scale = a.tr_mul(b).amax();
            if scale == 0.0 {
                return Err(Error::ZeroMeasurement);
            }
            ista_lasso(
                a,
                b,
                &IstaOptions {
                    lambda: solver.ista_lambda * scale,
                    max_iters: solver.ista_max_iters,
                    tol: solver.ista_tol,
                    top_k: Some(k),
                },
            )
        }
    }
}

/// `K log(N/K)` for the sufficient-measurement condition (natural log).
pub fn cs_threshold(n: f64, k: f64) -> f64 {
    k * (n / k).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoverabilityAdvisory {
    pub measurements: usize,
    pub grid_points: usize,
    pub targets: usize,
    /// `K·ln(N/K)`.
    pub threshold: f64,
    /// `measurements / threshold`.
    pub ratio: f64,
    /// True when the ratio is below one. Advisory only.
    pub flagged: bool,
}

pub fn recoverability_advisory(m_eff: usize, n: usize, k: usize) -> RecoverabilityAdvisory {
    let threshold = cs_threshold(n as f64, k as f64);
    let ratio = m_eff as f64 / threshold;
    RecoverabilityAdvisory {
        measurements: m_eff,
        grid_points: n,
        targets: k,
        threshold,
        ratio,
        flagged: ratio < 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// SNR estimated from the floor-removed power entries.
    pub snr_db: f64,
    pub residual_norm: f64,
    pub solver_converged: bool,
    pub advisory: RecoverabilityAdvisory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub scheme: Scheme,
    /// Sorted recovered cells.
    pub support: Vec<usize>,
    /// Centers of `support`, same order.
    pub positions: Vec<Point2>,
    pub diagnostics: Diagnostics,
}

fn estimated_snr(power_entries: &[f64], noise_variance: f64) -> f64 {
    let mean = power_entries.iter().sum::<f64>() / power_entries.len() as f64;
    10.0 * (mean / noise_variance).log10()
}

fn finish(
    scheme: Scheme,
    solution: SparseSolution,
    grid: &GridModel,
    snr_db: f64,
    m_eff: usize,
    k: usize,
) -> LocalizationResult {
    let support = solution.sorted_support();
    LocalizationResult {
        scheme,
        positions: support.iter().map(|&c| grid.center(c).xy()).collect(),
        diagnostics: Diagnostics {
            snr_db,
            residual_norm: solution.residual_norm,
            solver_converged: solution.converged,
            advisory: recoverability_advisory(m_eff, grid.len(), k),
        },
        support,
    }
}

/// CSM: strip `σ²` from the power measurement and solve against `J`.
pub fn locate_csm(
    meas: &MeasurementVector,
    j: &FingerprintJ,
    k: usize,
    noise_variance: f64,
    grid: &GridModel,
    solver: &SolverConfig,
) -> Result<LocalizationResult> {
    if meas.model != MeasurementModel::Power {
        return Err(Error::ModelMismatch {
            expected: "power",
            actual: meas.model.as_str(),
        });
    }
    if j.0.ncols() != grid.len() {
        return Err(Error::Shape(format!("J has {} columns, grid has {} cells", j.0.ncols(), grid.len())));
    }
    let pairs = PairIndexMap::new(j.0.nrows());
    let b = remove_noise_floor(meas, noise_variance, &pairs)?;
    let solution = solve(j.matrix(), &b.as_vector(), k, solver)?;
    let snr = estimated_snr(&b.values, noise_variance);
    Ok(finish(Scheme::Csm, solution, grid, snr, j.0.nrows(), k))
}

/// CoCSM: strip `σ²` from the diagonal-pair rows and solve against `Ψ`.
pub fn locate_cocsm(
    meas: &MeasurementVector,
    psi: &FingerprintPsi,
    k: usize,
    noise_variance: f64,
    grid: &GridModel,
    pairs: &PairIndexMap,
    solver: &SolverConfig,
) -> Result<LocalizationResult> {
    if meas.model != MeasurementModel::Correlation {
        return Err(Error::ModelMismatch {
            expected: "correlation",
            actual: meas.model.as_str(),
        });
    }
    if psi.0.ncols() != grid.len() {
        return Err(Error::Shape(format!("Ψ has {} columns, grid has {} cells", psi.0.ncols(), grid.len())));
    }
    let b = remove_noise_floor(meas, noise_variance, pairs)?;
    let solution = solve(psi.matrix(), &b.as_vector(), k, solver)?;
    let diag: Vec<f64> = pairs.diagonal_rows().iter().map(|&r| b.values[r]).collect();
    let snr = estimated_snr(&diag, noise_variance);
    Ok(finish(Scheme::Cocsm, solution, grid, snr, pairs.len(), k))
}

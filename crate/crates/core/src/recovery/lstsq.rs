use nalgebra::{DMatrix, DVector};

/// Relative pivot below which a selected column counts as dependent.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) struct Fit {
    pub coefficients: DVector<f64>,
    pub residual: DVector<f64>,
}

/// Least-squares fit of `b` on the columns `cols` of `a` via thin QR.
/// Returns `None` when the selected columns are numerically rank deficient.
pub(crate) fn fit(a: &DMatrix<f64>, cols: &[usize], b: &DVector<f64>) -> Option<Fit> {
    if cols.is_empty() {
        return Some(Fit {
            coefficients: DVector::zeros(0),
            residual: b.clone(),
        });
    }
    if cols.len() > a.nrows() {
        return None;
    }
    let sub = a.select_columns(cols);
    let qr = sub.clone().qr();
    let r = qr.r();
    for (k, col) in sub.column_iter().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || r[(k, k)].abs() <= RANK_TOL * norm {
            return None;
        }
    }
    let qtb = qr.q().transpose() * b;
    let coefficients = r.solve_upper_triangular(&qtb)?;
    let residual = b - &sub * &coefficients;
    Some(Fit {
        coefficients,
        residual,
    })
}

//! Positioning error with minimum-cost assignment between estimates and
//! ground truth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::Point2;

/// Solves the square assignment problem, returning `row → column`.
///
/// Classic O(n³) Hungarian method with row/column potentials.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based potentials; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[i0 - 1][col - 1] - u[i0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchOutcome {
    /// Mean matched distance Δ in meters.
    pub error: f64,
    /// `truth[k]` is matched to `estimates[assignment[k]]`; indices at or
    /// past `estimates.len()` are padding.
    pub assignment: Vec<usize>,
    /// Number of padded (missing) estimates.
    pub padded: usize,
}

/// Matches truth to estimates, padding missing estimates with a sentinel at
/// fixed distance `sentinel` from every truth point.
pub fn match_with_padding(estimates: &[Point2], truth: &[Point2], sentinel: f64) -> Result<MatchOutcome> {
    if truth.is_empty() {
        return Err(Error::Empty("ground truth"));
    }
    if estimates.len() > truth.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} targets",
            estimates.len(),
            truth.len()
        )));
    }
    let k = truth.len();
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            (0..k)
                .map(|e| estimates.get(e).map_or(sentinel, |p| t.distance(p)))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(t, &e)| cost[t][e]).sum();
    Ok(MatchOutcome {
        error: total / k as f64,
        assignment,
        padded: k - estimates.len(),
    })
}

/// Mean Euclidean distance under the minimum-cost pairing of equal-size sets.
pub fn match_and_error(estimates: &[Point2], truth: &[Point2]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    if estimates.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} targets",
            estimates.len(),
            truth.len()
        )));
    }
    Ok(match_with_padding(estimates, truth, f64::NAN)?.error)
}

//! Cooperative measurement synthesis.
//!
//! Targets aggregate their received pilots per anchor, `y_i = Σ_k h_ik + ω_i`.
//! The power model averages `y_i²` and the correlation model averages
//! `y_i y_j` for `i ≤ j`. Each target multiplies its contribution by an
//! i.i.d. ±1 dither per snapshot, so cross terms between distinct targets
//! vanish in expectation and the averages converge to `Jθ + σ²1` and
//! `Ψθ + σ² (diagonal rows)`.
//!
//! Snapshot loops run in fixed-size blocks. Each block draws from its own
//! counter-derived stream, and block sums are combined in block order, so
//! results do not depend on the thread count.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, FingerprintJ, FingerprintPsi, GainMatrix, PairIndexMap};
use crate::error::{Error, Result};
use crate::scenario::TargetSet;
use crate::streams::stream_rng;

const BLOCK: usize = 8192;

/// Binary on-grid occupancy vector θ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetIndicator {
    len: usize,
    support: Vec<usize>,
}

impl TargetIndicator {
    pub fn new(len: usize, cells: &[usize]) -> Result<Self> {
        let mut support = cells.to_vec();
        support.sort_unstable();
        for w in support.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateCell(w[0]));
            }
        }
        if let Some(&bad) = support.iter().find(|&&c| c >= len) {
            return Err(Error::CellOutOfRange { index: bad, n: len });
        }
        if support.is_empty() {
            return Err(Error::Empty("target indicator needs at least one target"));
        }
        Ok(Self { len, support })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of ones, K.
    pub fn count(&self) -> usize {
        self.support.len()
    }

    /// Sorted indices of the ones.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.len);
        for &c in &self.support {
            v[c] = 1.0;
        }
        v
    }
}

pub fn indicator_from_targets(targets: &TargetSet, n: usize) -> Result<TargetIndicator> {
    TargetIndicator::new(n, &targets.true_cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementModel {
    Power,
    Correlation,
}

impl MeasurementModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementModel::Power => "power",
            MeasurementModel::Correlation => "correlation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub model: MeasurementModel,
    /// σ² present in the values (before any floor removal).
    pub noise_floor: f64,
    /// Snapshots averaged; 0 for the exact expectation model.
    pub snapshots: usize,
}

impl MeasurementVector {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Per-target ±1 sign sequences, keyed by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DitherPlan {
    pub seed: u64,
    pub targets: usize,
}

impl DitherPlan {
    pub fn new(seed: u64, targets: usize) -> Self {
        Self { seed, targets }
    }

    fn fill<R: Rng>(&self, rng: &mut R, signs: &mut [f64]) {
        for chunk in signs.chunks_mut(64) {
            let bits: u64 = rng.random();
            for (b, s) in chunk.iter_mut().enumerate() {
                *s = if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 };
            }
        }
    }

    /// The sign sequence `s_k(ℓ)` for target `k` over `snapshots` snapshots.
    pub fn sequence(&self, k: usize, snapshots: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(snapshots);
        let mut signs = vec![0.0; self.targets];
        for (b, start) in (0..snapshots).step_by(BLOCK).enumerate() {
            let mut rng = stream_rng(self.seed, b as u64);
            for _ in start..(start + BLOCK).min(snapshots) {
                self.fill(&mut rng, &mut signs);
                out.push(signs[k]);
            }
        }
        out
    }
}

/// Averaged snapshot statistics over one stream of aggregated signals.
#[derive(Debug, Clone)]
pub struct SnapshotStatistics {
    /// Mean of `y_i²`, length M.
    pub power: Vec<f64>,
    /// Mean of `y_i y_j` for `i ≤ j` in [`PairIndexMap`] order, when requested.
    pub correlation: Option<Vec<f64>>,
}

/// Runs `snapshots` aggregated-signal snapshots for the target gain columns
/// of `gains` (M × K) and averages the requested second moments.
pub fn snapshot_statistics(
    gains: &GainMatrix,
    noise_variance: f64,
    snapshots: usize,
    dither: &DitherPlan,
    noise_seed: u64,
    with_correlation: bool,
) -> Result<SnapshotStatistics> {
    if snapshots == 0 {
        return Err(Error::NoSnapshots);
    }
    let m = gains.anchors();
    let k = gains.points();
    if dither.targets != k {
        return Err(Error::Shape(format!(
            "dither plan covers {} targets, gains cover {k}",
            dither.targets
        )));
    }
    let pairs = PairIndexMap::new(m);
    let width = if with_correlation { pairs.len() } else { m };
    let sigma = noise_variance.sqrt();
    // Row-major copy so the inner loop walks contiguous memory per anchor.
    let h: Vec<f64> = (0..m)
        .flat_map(|i| (0..k).map(move |t| (i, t)))
        .map(|(i, t)| gains.0[(i, t)])
        .collect();

    let blocks: Vec<usize> = (0..snapshots).step_by(BLOCK).collect();
    let sums: Vec<Vec<f64>> = blocks
        .par_iter()
        .enumerate()
        .map(|(b, &start)| {
            let mut dither_rng = stream_rng(dither.seed, b as u64);
            let mut noise_rng = stream_rng(noise_seed, b as u64);
            let mut acc = vec![0.0; width];
            let mut signs = vec![0.0; k];
            let mut y = vec![0.0; m];
            for _ in start..(start + BLOCK).min(snapshots) {
                dither.fill(&mut dither_rng, &mut signs);
                for (i, yi) in y.iter_mut().enumerate() {
                    let row = &h[i * k..(i + 1) * k];
                    let mut v: f64 = row.iter().zip(&signs).map(|(g, s)| g * s).sum();
                    if sigma > 0.0 {
                        let n: f64 = noise_rng.sample(StandardNormal);
                        v += sigma * n;
                    }
                    *yi = v;
                }
                if with_correlation {
                    let mut r = 0;
                    for i in 0..m {
                        let yi = y[i];
                        for yj in &y[i..] {
                            acc[r] += yi * yj;
                            r += 1;
                        }
                    }
                } else {
                    for (a, yi) in acc.iter_mut().zip(&y) {
                        *a += yi * yi;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0.0; width];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    let scale = 1.0 / snapshots as f64;
    total.iter_mut().for_each(|v| *v *= scale);

    if with_correlation {
        let power = pairs.diagonal_rows().iter().map(|&r| total[r]).collect();
        Ok(SnapshotStatistics {
            power,
            correlation: Some(total),
        })
    } else {
        Ok(SnapshotStatistics {
            power: total,
            correlation: None,
        })
    }
}

/// `p = Jθ + σ² 1_M`.
pub fn synthesize_ideal_power(
    j: &FingerprintJ,
    theta: &TargetIndicator,
    noise_variance: f64,
) -> Result<MeasurementVector> {
    if j.0.ncols() != theta.len() {
        return Err(Error::Shape(format!(
            "J has {} columns, indicator has {} entries",
            j.0.ncols(),
            theta.len()
        )));
    }
    let mut values = vec![noise_variance; j.0.nrows()];
    for &c in theta.support() {
        for (v, x) in values.iter_mut().zip(j.0.column(c).iter()) {
            *v += x;
        }
    }
    Ok(MeasurementVector {
        values,
        model: MeasurementModel::Power,
        noise_floor: noise_variance,
        snapshots: 0,
    })
}

/// `ŷ = Ψθ + σ²` on the diagonal-pair rows.
pub fn synthesize_ideal_correlation(
    psi: &FingerprintPsi,
    theta: &TargetIndicator,
    noise_variance: f64,
    pairs: &PairIndexMap,
) -> Result<MeasurementVector> {
    if psi.0.ncols() != theta.len() || psi.0.nrows() != pairs.len() {
        return Err(Error::Shape(format!(
            "Ψ is {}×{}, expected {}×{}",
            psi.0.nrows(),
            psi.0.ncols(),
            pairs.len(),
            theta.len()
        )));
    }
    let mut values = vec![0.0; pairs.len()];
    for &c in theta.support() {
        for (v, x) in values.iter_mut().zip(psi.0.column(c).iter()) {
            *v += x;
        }
    }
    for r in pairs.diagonal_rows() {
        values[r] += noise_variance;
    }
    Ok(MeasurementVector {
        values,
        model: MeasurementModel::Correlation,
        noise_floor: noise_variance,
        snapshots: 0,
    })
}

/// Draws the noise-stream key from `rng` and runs the snapshots.
fn snapshot_for_targets<R: Rng + ?Sized>(
    channel: &ChannelModel,
    targets: &TargetSet,
    noise_variance: f64,
    snapshots: usize,
    dither: &DitherPlan,
    rng: &mut R,
    with_correlation: bool,
) -> Result<SnapshotStatistics> {
    let gains = channel.gains_for_positions(&targets.true_positions)?;
    let noise_seed: u64 = rng.random();
    snapshot_statistics(
        &gains,
        noise_variance,
        snapshots,
        dither,
        noise_seed,
        with_correlation,
    )
}

/// Empirical power measurement from `snapshots` aggregated snapshots. Gains
/// are taken at the continuous target positions.
pub fn synthesize_snapshot_power<R: Rng + ?Sized>(
    channel: &ChannelModel,
    targets: &TargetSet,
    noise_variance: f64,
    snapshots: usize,
    dither: &DitherPlan,
    rng: &mut R,
) -> Result<MeasurementVector> {
    let stats = snapshot_for_targets(
        channel,
        targets,
        noise_variance,
        snapshots,
        dither,
        rng,
        false,
    )?;
    Ok(MeasurementVector {
        values: stats.power,
        model: MeasurementModel::Power,
        noise_floor: noise_variance,
        snapshots,
    })
}

/// Empirical correlation measurement over the selected `i ≤ j` pairs.
pub fn synthesize_snapshot_correlation<R: Rng + ?Sized>(
    channel: &ChannelModel,
    targets: &TargetSet,
    noise_variance: f64,
    snapshots: usize,
    dither: &DitherPlan,
    rng: &mut R,
    pairs: &PairIndexMap,
) -> Result<MeasurementVector> {
    if pairs.anchors() != channel.anchors() {
        return Err(Error::Shape(format!(
            "pair map covers {} anchors, channel has {}",
            pairs.anchors(),
            channel.anchors()
        )));
    }
    let stats = snapshot_for_targets(
        channel,
        targets,
        noise_variance,
        snapshots,
        dither,
        rng,
        true,
    )?;
    Ok(MeasurementVector {
        values: stats.correlation.expect("correlation requested"),
        model: MeasurementModel::Correlation,
        noise_floor: noise_variance,
        snapshots,
    })
}

/// Subtracts the known noise floor: every entry for the power model, only
/// diagonal-pair rows for the correlation model. Results clamp at zero.
pub fn remove_noise_floor(
    meas: &MeasurementVector,
    noise_variance: f64,
    pairs: &PairIndexMap,
) -> Result<MeasurementVector> {
    let mut values = meas.values.clone();
    match meas.model {
        MeasurementModel::Power => {
            if values.len() != pairs.anchors() {
                return Err(Error::ModelMismatch {
                    expected: "power",
                    actual: "correlation",
                });
            }
            values.iter_mut().for_each(|v| *v -= noise_variance);
        }
        MeasurementModel::Correlation => {
            if values.len() != pairs.len() {
                return Err(Error::ModelMismatch {
                    expected: "correlation",
                    actual: "power",
                });
            }
            for r in pairs.diagonal_rows() {
                values[r] -= noise_variance;
            }
        }
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(MeasurementVector {
        values,
        noise_floor: 0.0,
        ..meas.clone()
    })
}

/// `10 log10(mean_i p_i / σ²)` for a noise-free ideal power vector.
pub fn snr_db(ideal_power: &[f64], noise_variance: f64) -> f64 {
    let mean = ideal_power.iter().sum::<f64>() / ideal_power.len() as f64;
    10.0 * (mean / noise_variance).log10()
}

/// Noise variance that gives `snr_db` for the noise-free power vector.
pub fn noise_variance_for_snr(ideal_power: &[f64], snr_db: f64) -> f64 {
    let mean = ideal_power.iter().sum::<f64>() / ideal_power.len() as f64;
    mean / 10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_correlation_fingerprint, build_gain_matrix, build_power_fingerprint, lambertian_order};
    use crate::scenario::{build_grid, place_leds, GridModel, SceneConfig};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Scene {
        grid: GridModel,
        channel: ChannelModel,
        h: GainMatrix,
        j: FingerprintJ,
        psi: FingerprintPsi,
        pairs: PairIndexMap,
    }

    fn scene() -> Scene {
        let cfg = SceneConfig::default();
        let grid = build_grid(&cfg).unwrap();
        let leds = place_leds(&cfg).unwrap();
        let m = lambertian_order(cfg.half_power_angle).unwrap();
        let h = build_gain_matrix(&leds, &grid, &cfg.pd, m).unwrap();
        let j = build_power_fingerprint(&h);
        let (psi, pairs) = build_correlation_fingerprint(&h);
        let channel = ChannelModel {
            leds,
            pd: cfg.pd,
            order: m,
            receiver_height: cfg.receiver_height,
        };
        Scene { grid, channel, h, j, psi, pairs }
    }

    #[test]
    fn indicator_basics() {
        let t = TargetIndicator::new(8, &[5, 2]).unwrap();
        assert_eq!(t.to_vector().as_slice(), &[0., 0., 1., 0., 0., 1., 0., 0.]);
        assert_eq!(TargetIndicator::new(4, &[0]).unwrap().to_vector().as_slice(), &[1., 0., 0., 0.]);
        assert!(matches!(TargetIndicator::new(8, &[2, 2]), Err(Error::DuplicateCell(2))));
        assert!(TargetIndicator::new(8, &[8]).is_err());
        assert!(TargetIndicator::new(8, &[]).is_err());
    }

    #[test]
    fn indicator_round_trip() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[17, 3, 250]).unwrap();
        let theta = indicator_from_targets(&targets, s.grid.len()).unwrap();
        assert_eq!(theta.support(), &[3, 17, 250]);
    }

    #[test]
    fn ideal_power_cases() {
        let s = scene();
        let e7 = TargetIndicator::new(400, &[7]).unwrap();
        let p = synthesize_ideal_power(&s.j, &e7, 0.0).unwrap();
        assert_eq!(p.values, s.j.0.column(7).iter().copied().collect::<Vec<_>>());
        let two = TargetIndicator::new(400, &[2, 5]).unwrap();
        let p = synthesize_ideal_power(&s.j, &two, 0.0).unwrap();
        for i in 0..16 {
            assert_eq!(p.values[i], s.j.0[(i, 2)] + s.j.0[(i, 5)]);
        }
        let zero_j = FingerprintJ(DMatrix::zeros(3, 4));
        let p = synthesize_ideal_power(&zero_j, &TargetIndicator::new(4, &[0]).unwrap(), 0.1).unwrap();
        assert_eq!(p.values, vec![0.1; 3]);
        assert!(p.values.iter().all(|&v| v >= p.noise_floor));
    }

    #[test]
    fn ideal_correlation_toy() {
        let h = GainMatrix(DMatrix::from_column_slice(2, 1, &[3.0, 4.0]));
        let (psi, pairs) = build_correlation_fingerprint(&h);
        let e0 = TargetIndicator::new(1, &[0]).unwrap();
        let y = synthesize_ideal_correlation(&psi, &e0, 0.5, &pairs).unwrap();
        assert_eq!(y.values, vec![9.5, 12.0, 16.5]);
        let y0 = synthesize_ideal_correlation(&psi, &e0, 0.0, &pairs).unwrap();
        assert_eq!(y0.values, vec![9.0, 12.0, 16.0]);
    }

    #[test]
    fn correlation_is_affine() {
        let s = scene();
        let a = TargetIndicator::new(400, &[10]).unwrap();
        let b = TargetIndicator::new(400, &[300]).unwrap();
        let ab = TargetIndicator::new(400, &[10, 300]).unwrap();
        let sigma2 = 1e-12;
        let ya = synthesize_ideal_correlation(&s.psi, &a, sigma2, &s.pairs).unwrap();
        let yb = synthesize_ideal_correlation(&s.psi, &b, sigma2, &s.pairs).unwrap();
        let yab = synthesize_ideal_correlation(&s.psi, &ab, sigma2, &s.pairs).unwrap();
        for r in 0..s.pairs.len() {
            let floor = if s.pairs.is_diagonal(r) { sigma2 } else { 0.0 };
            let expect = ya.values[r] + yb.values[r] - floor;
            assert!((yab.values[r] - expect).abs() <= 1e-12 * expect.abs());
        }
        let pa = synthesize_ideal_power(&s.j, &a, 0.0).unwrap();
        let pb = synthesize_ideal_power(&s.j, &b, 0.0).unwrap();
        let pab = synthesize_ideal_power(&s.j, &ab, 0.0).unwrap();
        for i in 0..16 {
            assert_eq!(pab.values[i], pa.values[i] + pb.values[i]);
        }
    }

    #[test]
    fn single_target_snapshots_are_exact() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[123]).unwrap();
        let dither = DitherPlan::new(4, 1);
        for l in [1, 7, 20_000] {
            let p = synthesize_snapshot_power(&s.channel, &targets, 0.0, l, &dither, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let c = synthesize_snapshot_correlation(&s.channel, &targets, 0.0, l, &dither, &mut ChaCha8Rng::seed_from_u64(1), &s.pairs).unwrap();
            for i in 0..16 {
                let h = s.h.0[(i, 123)];
                assert!((p.values[i] - h * h).abs() <= 1e-12 * h * h);
            }
            for (r, (i, j)) in s.pairs.pairs().enumerate() {
                let want = s.h.0[(i, 123)] * s.h.0[(j, 123)];
                assert!((c.values[r] - want).abs() <= 1e-12 * want);
            }
        }
    }

    #[test]
    fn one_snapshot_has_cross_terms() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[0, 399]).unwrap();
        let theta = indicator_from_targets(&targets, 400).unwrap();
        let ideal = synthesize_ideal_power(&s.j, &theta, 0.0).unwrap();
        let p = synthesize_snapshot_power(&s.channel, &targets, 0.0, 1, &DitherPlan::new(9, 2), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let dev = p.values.iter().zip(&ideal.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev > 1e-3 * ideal.values.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn snapshot_power_and_correlation_converge() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[45, 210]).unwrap();
        let theta = indicator_from_targets(&targets, 400).unwrap();
        let ideal_p = synthesize_ideal_power(&s.j, &theta, 0.0).unwrap();
        let ideal_c = synthesize_ideal_correlation(&s.psi, &theta, 0.0, &s.pairs).unwrap();
        let dither = DitherPlan::new(77, 2);
        let l = 1_000_000;
        let p = synthesize_snapshot_power(&s.channel, &targets, 0.0, l, &dither, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = synthesize_snapshot_correlation(&s.channel, &targets, 0.0, l, &dither, &mut ChaCha8Rng::seed_from_u64(3), &s.pairs).unwrap();
        for (est, ideal) in [(&p.values, &ideal_p.values), (&c.values, &ideal_c.values)] {
            let worst = est.iter().zip(ideal.iter()).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-2, "max relative deviation {worst}");
        }
    }

    #[test]
    fn off_diagonal_pairs_carry_no_noise_floor() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[0]).unwrap();
        let theta = indicator_from_targets(&targets, 400).unwrap();
        let ideal = synthesize_ideal_correlation(&s.psi, &theta, 0.0, &s.pairs).unwrap();
        let peak = ideal.values.iter().copied().fold(0.0, f64::max);
        let sigma2 = peak;
        let l = 1_000_000;
        let c = synthesize_snapshot_correlation(&s.channel, &targets, sigma2, l, &DitherPlan::new(1, 1), &mut ChaCha8Rng::seed_from_u64(5), &s.pairs).unwrap();
        // Std of a noisy cross moment is at most ~ (σ² + σ h_max·2) / √L.
        let bound = 6.0 * (sigma2 + 2.0 * (sigma2 * peak).sqrt()) / (l as f64).sqrt();
        for (r, (i, j)) in s.pairs.pairs().enumerate() {
            let dev = c.values[r] - ideal.values[r];
            if i == j {
                assert!((dev - sigma2).abs() < bound, "diag {i}: {dev}");
            } else {
                assert!(dev.abs() < bound, "pair ({i},{j}): {dev} vs {bound}");
            }
        }
    }

    #[test]
    fn snapshot_correlation_is_symmetric_and_deterministic() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[1, 2, 3]).unwrap();
        let d = DitherPlan::new(3, 3);
        let a = synthesize_snapshot_correlation(&s.channel, &targets, 1e-13, 5000, &d, &mut ChaCha8Rng::seed_from_u64(8), &s.pairs).unwrap();
        let b = synthesize_snapshot_correlation(&s.channel, &targets, 1e-13, 5000, &d, &mut ChaCha8Rng::seed_from_u64(8), &s.pairs).unwrap();
        assert_eq!(a, b);
        // Diagonal rows agree with the power measurement from the same stream.
        let p = synthesize_snapshot_power(&s.channel, &targets, 1e-13, 5000, &d, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        for i in 0..16 {
            assert!((a.values[s.pairs.index(i, i)] - p.values[i]).abs() <= 1e-15 * p.values[i].abs().max(1e-300) + 1e-30);
        }
    }

    #[test]
    fn zero_snapshots_rejected() {
        let s = scene();
        let targets = TargetSet::on_cells(&s.grid, &[1]).unwrap();
        let r = synthesize_snapshot_power(&s.channel, &targets, 0.0, 0, &DitherPlan::new(1, 1), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(r, Err(Error::NoSnapshots)));
    }

    #[test]
    fn dither_has_vanishing_bias() {
        let d = DitherPlan::new(12, 3);
        let l = 200_000;
        let seqs: Vec<_> = (0..3).map(|k| d.sequence(k, l)).collect();
        for s in &seqs {
            assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
            let mean = s.iter().sum::<f64>() / l as f64;
            assert!(mean.abs() < 5.0 / (l as f64).sqrt());
        }
        let cross = seqs[0].iter().zip(&seqs[1]).map(|(a, b)| a * b).sum::<f64>() / l as f64;
        assert!(cross.abs() < 5.0 / (l as f64).sqrt());
    }

    #[test]
    fn noise_floor_removal() {
        let s = scene();
        let e = TargetIndicator::new(400, &[31]).unwrap();
        let p = synthesize_ideal_power(&s.j, &e, 0.1).unwrap();
        let b = remove_noise_floor(&p, 0.1, &s.pairs).unwrap();
        for i in 0..16 {
            assert!((b.values[i] - s.j.0[(i, 31)]).abs() < 1e-16);
        }
        let p0 = synthesize_ideal_power(&s.j, &e, 0.0).unwrap();
        assert_eq!(remove_noise_floor(&p0, 0.0, &s.pairs).unwrap().values, p0.values);

        let floor_only = MeasurementVector { values: vec![0.2; 16], model: MeasurementModel::Power, noise_floor: 0.2, snapshots: 0 };
        assert!(remove_noise_floor(&floor_only, 0.2, &s.pairs).unwrap().values.iter().all(|&v| v == 0.0));

        let y = synthesize_ideal_correlation(&s.psi, &e, 0.1, &s.pairs).unwrap();
        let b = remove_noise_floor(&y, 0.1, &s.pairs).unwrap();
        for r in 0..s.pairs.len() {
            assert!((b.values[r] - s.psi.0[(r, 31)]).abs() < 1e-16);
        }
        let mislabeled = MeasurementVector { model: MeasurementModel::Power, ..y };
        assert!(matches!(remove_noise_floor(&mislabeled, 0.1, &s.pairs), Err(Error::ModelMismatch { .. })));
    }

    #[test]
    fn snr_helpers_invert() {
        let p = [1.0, 3.0];
        let s2 = noise_variance_for_snr(&p, 20.0);
        assert!((s2 - 0.02).abs() < 1e-15);
        assert!((snr_db(&p, s2) - 20.0).abs() < 1e-12);
    }
}

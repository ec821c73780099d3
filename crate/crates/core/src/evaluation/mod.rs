//! Error metric, RSS baseline and the Monte-Carlo experiment harness.

mod baseline;
mod matching;

pub use baseline::{ranges_from_rss, rss_baseline_locate, synthesize_rss};
pub use matching::{hungarian, match_and_error, match_with_padding, MatchOutcome};

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    build_correlation_fingerprint, build_gain_matrix, build_power_fingerprint, lambertian_order,
    ChannelModel, FingerprintJ, FingerprintPsi, GainMatrix, PairIndexMap,
};
use crate::error::{Error, Result};
use crate::measurement::{
    noise_variance_for_snr, snapshot_statistics, snr_db, DitherPlan, MeasurementModel,
    MeasurementVector,
};
use crate::recovery::{locate_cocsm, locate_csm, SolverConfig};
use crate::scenario::{
    build_grid, place_leds, sample_targets, GridModel, Point2, SceneConfig, Scheme, TargetSet,
};
use crate::streams::{derive_seed, stream_rng};

/// A validated scene with its fingerprints precomputed.
#[derive(Debug, Clone)]
pub struct SceneModel {
    pub config: SceneConfig,
    pub grid: GridModel,
    pub channel: ChannelModel,
    pub gains: GainMatrix,
    pub j: FingerprintJ,
    pub psi: FingerprintPsi,
    pub pairs: PairIndexMap,
}

impl SceneModel {
    pub fn new(config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let grid = build_grid(config)?;
        let leds = place_leds(config)?;
        let order = lambertian_order(config.half_power_angle)?;
        let gains = build_gain_matrix(&leds, &grid, &config.pd, order)?;
        let j = build_power_fingerprint(&gains);
        let (psi, pairs) = build_correlation_fingerprint(&gains);
        Ok(Self {
            config: config.clone(),
            channel: ChannelModel {
                leds,
                pd: config.pd,
                order,
                receiver_height: config.receiver_height,
            },
            grid,
            gains,
            j,
            psi,
            pairs,
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig::from(&self.config)
    }
}

/// How the noise variance of a trial is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    /// Derive σ² so that `10 log10(mean(Jθ)/σ²)` equals this value, with
    /// `Jθ` evaluated at the true target positions.
    SnrDb(f64),
    Variance(f64),
}

impl NoiseSetting {
    pub fn from_config(cfg: &SceneConfig) -> Self {
        match cfg.snr_db {
            Some(s) => NoiseSetting::SnrDb(s),
            None => NoiseSetting::Variance(cfg.noise_variance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    #[serde(rename = "L")]
    pub snapshots: usize,
    /// Δ in meters; the sentinel (room diagonal) when `failed`.
    pub positioning_error: f64,
    pub exact_support: bool,
    pub failed: bool,
    pub failure: Option<String>,
    /// Estimates padded with the sentinel because the solver under-returned.
    pub padded: usize,
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub result: TrialResult,
    pub estimates: Vec<Point2>,
    /// Estimated cells: the recovered support, or the cells containing the
    /// baseline estimates.
    pub cells: Vec<usize>,
    /// `truth[k]` is paired with `estimates[assignment[k]]`.
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub targets: TargetSet,
    pub noise_variance: f64,
    pub snr_db: f64,
    pub schemes: Vec<SchemeOutcome>,
    /// The synthesized measurements used by the CS schemes.
    pub power: Option<MeasurementVector>,
    pub correlation: Option<MeasurementVector>,
}

impl TrialOutcome {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.schemes.iter().find(|s| s.result.scheme == scheme)
    }
}

struct Located {
    estimates: Vec<Point2>,
    cells: Vec<usize>,
}

fn score(
    model: &SceneModel,
    scheme: Scheme,
    targets: &TargetSet,
    snr: f64,
    located: Result<Located>,
    started: Instant,
) -> SchemeOutcome {
    let cfg = &model.config;
    let k = targets.len();
    let sentinel = cfg.room_diagonal();
    let base = TrialResult {
        scheme,
        k,
        snr_db: snr,
        snapshots: cfg.snapshots,
        positioning_error: sentinel,
        exact_support: false,
        failed: true,
        failure: None,
        padded: 0,
        runtime_s: 0.0,
    };
    let outcome = located.and_then(|loc| {
        let m = match_with_padding(&loc.estimates, &targets.true_positions, sentinel)?;
        Ok((loc, m))
    });
    match outcome {
        Ok((loc, m)) => {
            let truth: BTreeSet<usize> = targets.true_cells.iter().copied().collect();
            let found: BTreeSet<usize> = loc.cells.iter().copied().collect();
            SchemeOutcome {
                result: TrialResult {
                    positioning_error: m.error,
                    exact_support: truth == found,
                    failed: false,
                    padded: m.padded,
                    runtime_s: started.elapsed().as_secs_f64(),
                    ..base
                },
                estimates: loc.estimates,
                cells: loc.cells,
                assignment: m.assignment,
            }
        }
        Err(e) => SchemeOutcome {
            result: TrialResult {
                failure: Some(e.to_string()),
                runtime_s: started.elapsed().as_secs_f64(),
                ..base
            },
            estimates: Vec::new(),
            cells: Vec::new(),
            assignment: Vec::new(),
        },
    }
}

/// Samples targets, synthesizes snapshot measurements and runs each
/// requested scheme on the same targets. Deterministic in `seed`.
///
/// The CS schemes share one stream of aggregated snapshots. The RSS
/// baseline sees each target separately, with the same σ² and snapshot
/// count but no aggregation.
pub fn run_trial(
    model: &SceneModel,
    k: usize,
    noise: NoiseSetting,
    schemes: &[Scheme],
    seed: u64,
) -> Result<TrialOutcome> {
    let cfg = &model.config;
    let mut rng = stream_rng(seed, 0);
    let targets = sample_targets(&model.grid, k, cfg.on_grid, &mut rng)?;
    let true_gains = model.channel.gains_for_positions(&targets.true_positions)?;

    let ideal_power: Vec<f64> = (0..true_gains.anchors())
        .map(|i| (0..k).map(|t| true_gains.0[(i, t)].powi(2)).sum())
        .collect();
    let noise_variance = match noise {
        NoiseSetting::SnrDb(s) => noise_variance_for_snr(&ideal_power, s),
        NoiseSetting::Variance(v) => v,
    };
    let snr = snr_db(&ideal_power, noise_variance);
    let solver = model.solver();

    let wants_cs = schemes.iter().any(|s| *s != Scheme::RssBaseline);
    let wants_corr = schemes.contains(&Scheme::Cocsm);
    let stats = if wants_cs {
        let dither = DitherPlan::new(derive_seed(seed, &[1]), k);
        Some(snapshot_statistics(
            &true_gains,
            noise_variance,
            cfg.snapshots,
            &dither,
            derive_seed(seed, &[2]),
            wants_corr,
        )?)
    } else {
        None
    };
    let power = stats.as_ref().map(|s| MeasurementVector {
        values: s.power.clone(),
        model: MeasurementModel::Power,
        noise_floor: noise_variance,
        snapshots: cfg.snapshots,
    });
    let correlation = stats.as_ref().and_then(|s| {
        s.correlation.as_ref().map(|c| MeasurementVector {
            values: c.clone(),
            model: MeasurementModel::Correlation,
            noise_floor: noise_variance,
            snapshots: cfg.snapshots,
        })
    });

    let mut outcomes = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let started = Instant::now();
        let located = match scheme {
            Scheme::Csm => locate_csm(
                power.as_ref().expect("power synthesized"),
                &model.j,
                k,
                noise_variance,
                &model.grid,
                &solver,
            )
            .map(|r| Located {
                estimates: r.positions,
                cells: r.support,
            }),
            Scheme::Cocsm => locate_cocsm(
                correlation.as_ref().expect("correlation synthesized"),
                &model.psi,
                k,
                noise_variance,
                &model.grid,
                &model.pairs,
                &solver,
            )
            .map(|r| Located {
                estimates: r.positions,
                cells: r.support,
            }),
            Scheme::RssBaseline => {
                run_baseline(model, &true_gains, noise_variance, derive_seed(seed, &[3]))
            }
        };
        outcomes.push(score(model, scheme, &targets, snr, located, started));
    }

    Ok(TrialOutcome {
        seed,
        targets,
        noise_variance,
        snr_db: snr,
        schemes: outcomes,
        power,
        correlation,
    })
}

fn run_baseline(
    model: &SceneModel,
    true_gains: &GainMatrix,
    noise_variance: f64,
    seed: u64,
) -> Result<Located> {
    let ch = &model.channel;
    let mut estimates = Vec::with_capacity(true_gains.points());
    for t in 0..true_gains.points() {
        let mut rng = stream_rng(seed, t as u64);
        let gains: Vec<f64> = true_gains.0.column(t).iter().copied().collect();
        let raw = synthesize_rss(&gains, noise_variance, model.config.snapshots, &mut rng)?;
        let rss: Vec<f64> = raw.iter().map(|p| (p - noise_variance).max(0.0)).collect();
        estimates.push(rss_baseline_locate(&rss, &ch.leds, &ch.pd, ch.order, ch.receiver_height)?);
    }
    let cells = estimates.iter().map(|&p| model.grid.cell_of(p)).collect();
    Ok(Located { estimates, cells })
}

/// Seed of trial `t` in the `(snr, k)` cell of a campaign keyed by `base`.
/// Independent of the total trial count, so longer campaigns extend shorter
/// ones.
pub fn trial_seed(base: u64, noise: NoiseSetting, k: usize, t: usize) -> u64 {
    let noise_label = match noise {
        NoiseSetting::SnrDb(s) => s.to_bits(),
        NoiseSetting::Variance(v) => v.to_bits() ^ 0x5555_5555_5555_5555,
    };
    derive_seed(base, &[noise_label, k as u64, t as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    #[serde(rename = "L")]
    pub snapshots: usize,
    pub trials: usize,
    pub failures: usize,
    /// Mean Δ over non-failed trials (NaN when every trial failed).
    pub mean_error_m: f64,
    pub std_error_m: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: SceneConfig,
    #[serde(rename = "K_list")]
    pub k_list: Vec<usize>,
    pub snr_list: Vec<f64>,
    pub trials: usize,
    pub rows: Vec<CampaignRow>,
}

impl CampaignReport {
    pub fn row(&self, scheme: Scheme, k: usize, snr_db: f64) -> Option<&CampaignRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.k == k && r.snr_db == snr_db)
    }

    /// Cells in which every trial of some scheme failed.
    pub fn fully_failed(&self) -> Vec<&CampaignRow> {
        self.rows.iter().filter(|r| r.trials > 0 && r.failures == r.trials).collect()
    }
}

/// Mean and sample standard deviation, accumulated in slice order.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(scheme: Scheme, k: usize, snr_db: f64, snapshots: usize, results: &[&TrialResult]) -> CampaignRow {
    let ok: Vec<f64> = results
        .iter()
        .filter(|r| !r.failed)
        .map(|r| r.positioning_error)
        .collect();
    let (mean, std) = mean_std(&ok);
    let successes = results.iter().filter(|r| r.exact_support).count();
    CampaignRow {
        scheme,
        k,
        snr_db,
        snapshots,
        trials: results.len(),
        failures: results.len() - ok.len(),
        mean_error_m: mean,
        std_error_m: std,
        success_rate: successes as f64 / results.len() as f64,
    }
}

/// Full factorial over SNR × K, all three schemes paired on each trial.
/// Rows are ordered by SNR, then K, then scheme.
pub fn run_campaign(model: &SceneModel, k_list: &[usize], snr_list: &[f64], trials: usize) -> Result<CampaignReport> {
    if trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    if k_list.is_empty() || snr_list.is_empty() {
        return Err(Error::config("K_list", "axis lists must be non-empty"));
    }
    let mut rows = Vec::new();
    for &snr in snr_list {
        let noise = NoiseSetting::SnrDb(snr);
        for &k in k_list {
            let outcomes: Vec<TrialOutcome> = (0..trials)
                .into_par_iter()
                .map(|t| run_trial(model, k, noise, &Scheme::ALL, trial_seed(model.config.seed, noise, k, t)))
                .collect::<Result<_>>()?;
            for scheme in Scheme::ALL {
                let results: Vec<&TrialResult> = outcomes
                    .iter()
                    .map(|o| &o.scheme(scheme).expect("all schemes run").result)
                    .collect();
                rows.push(aggregate(scheme, k, snr, model.config.snapshots, &results));
            }
        }
    }
    Ok(CampaignReport {
        config: model.config.clone(),
        k_list: k_list.to_vec(),
        snr_list: snr_list.to_vec(),
        trials,
        rows,
    })
}

/// Draws a seed from `rng` for a one-off trial.
pub fn fresh_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SceneConfig {
        SceneConfig {
            snapshots: 2000,
            on_grid: true,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn noiseless_single_target_is_exact() {
        let model = SceneModel::new(&small_config()).unwrap();
        for seed in 0..5 {
            let out = run_trial(&model, 1, NoiseSetting::Variance(0.0), &Scheme::ALL, seed).unwrap();
            let t = out.targets.true_positions[0];
            let cell = out.targets.true_cells[0];
            for s in &out.schemes {
                assert!(!s.result.failed, "{:?}", s.result.failure);
            }
            assert_eq!(out.scheme(Scheme::Csm).unwrap().result.positioning_error, 0.0);
            assert_eq!(out.scheme(Scheme::Cocsm).unwrap().result.positioning_error, 0.0);
            let rss = out.scheme(Scheme::RssBaseline).unwrap();
            assert!(rss.result.positioning_error <= t.distance(&model.grid.center(cell).xy()) + 1e-6);
            assert!(rss.result.positioning_error < 1e-6);
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let model = SceneModel::new(&small_config()).unwrap();
        let run = || {
            let mut o = run_trial(&model, 4, NoiseSetting::SnrDb(20.0), &Scheme::ALL, 99).unwrap();
            o.schemes.iter_mut().for_each(|s| s.result.runtime_s = 0.0);
            o
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!((a.snr_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn off_grid_exact_support_equals_quantization_error() {
        let cfg = SceneConfig { on_grid: false, ..small_config() };
        let model = SceneModel::new(&cfg).unwrap();
        let out = run_trial(&model, 1, NoiseSetting::Variance(0.0), &[Scheme::Cocsm], 5).unwrap();
        let s = out.scheme(Scheme::Cocsm).unwrap();
        if s.result.exact_support {
            let offset = out.targets.mean_center_offset(&model.grid);
            assert!((s.result.positioning_error - offset).abs() < 1e-12);
        }
    }

    #[test]
    fn solver_failures_are_recorded() {
        let model = SceneModel::new(&small_config()).unwrap();
        // More targets than anchors breaks OMP's K ≤ rows precondition for CSM.
        let out = run_trial(&model, 20, NoiseSetting::Variance(0.0), &[Scheme::Csm, Scheme::Cocsm], 1).unwrap();
        let csm = out.scheme(Scheme::Csm).unwrap();
        assert!(csm.result.failed);
        assert_eq!(csm.result.positioning_error, model.config.room_diagonal());
        assert!(!out.scheme(Scheme::Cocsm).unwrap().result.failed);
    }

    #[test]
    fn campaign_shapes_and_prefix_stability() {
        let model = SceneModel::new(&small_config()).unwrap();
        let one = run_campaign(&model, &[2], &[20.0], 1).unwrap();
        assert_eq!(one.rows.len(), 3);
        let single = run_trial(&model, 2, NoiseSetting::SnrDb(20.0), &Scheme::ALL, trial_seed(1, NoiseSetting::SnrDb(20.0), 2, 0)).unwrap();
        for row in &one.rows {
            let r = &single.scheme(row.scheme).unwrap().result;
            assert_eq!(row.mean_error_m, r.positioning_error);
            assert_eq!(row.std_error_m, 0.0);
            assert_eq!(row.success_rate, if r.exact_support { 1.0 } else { 0.0 });
        }

        let short = run_campaign(&model, &[2, 3], &[20.0], 3).unwrap();
        let long = run_campaign(&model, &[2, 3], &[20.0], 6).unwrap();
        assert_eq!(long.rows.len(), 6);
        // First three trials of the long run equal the short run.
        for k in [2, 3] {
            let seeds: Vec<u64> = (0..3).map(|t| trial_seed(1, NoiseSetting::SnrDb(20.0), k, t)).collect();
            let firsts: Vec<f64> = seeds
                .iter()
                .map(|&s| run_trial(&model, k, NoiseSetting::SnrDb(20.0), &Scheme::ALL, s).unwrap().schemes[0].result.positioning_error)
                .collect();
            let mean = firsts.iter().sum::<f64>() / 3.0;
            assert_eq!(short.row(Scheme::Csm, k, 20.0).unwrap().mean_error_m, mean);
        }
        assert!(run_campaign(&model, &[2], &[20.0], 0).is_err());
    }

    #[test]
    fn mean_std_edge_cases() {
        assert!(mean_std(&[]).0.is_nan());
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}

//! Command-line front end: `fingerprint`, `simulate`, `sweep` and `baseline`.
//!
//! Every subcommand resolves and validates its configuration before touching
//! the output directory, then writes its files and finally `manifest.json`.

mod output;

pub use output::{fmt_f64, sha256_file, OutputDir, OutputFile};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{run_campaign, run_trial, NoiseSetting, SceneModel, TrialOutcome};
use crate::scenario::{SceneConfig, Scheme, SolverKind};
use output::{matrix_csv, push_record};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
/// A sweep cell in which every trial of some scheme failed.
pub const EXIT_ALL_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vlp-sparse", version, about = "Compressed-sensing multi-target visible light positioning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON scene config; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set snapshots=100000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, env = "VLP_SPARSE_OUT", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the gain matrix H and the fingerprints J and Psi.
    Fingerprint,
    /// Run one trial and write a scatter of true and estimated positions.
    Simulate(SimulateArgs),
    /// Monte-Carlo campaign over K and SNR for all schemes.
    Sweep(SweepArgs),
    /// Run one trial of the RSS lateration baseline only.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Also write the synthesized measurement vectors.
    #[arg(long)]
    pub dump_measurements: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "K-list", value_delimiter = ',', default_value = "2,4,6,8,10")]
    pub k_list: Vec<usize>,
    #[arg(long = "snr-list", value_delimiter = ',', default_value = "20")]
    pub snr_list: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Rerun the sweep recorded in a manifest; other sweep flags are ignored.
    #[arg(long, value_name = "MANIFEST")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long = "K")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    #[serde(rename = "K_list")]
    pub k_list: Vec<usize>,
    pub snr_list: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: SceneConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepParams>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        manifest.config.validate()?;
        Ok(manifest)
    }

    /// Checks every listed digest against the files next to the manifest.
    pub fn verify(&self, dir: &Path) -> Result<bool> {
        for f in &self.outputs {
            if sha256_file(&dir.join(&f.path))? != f.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn resolve_config(global: &GlobalArgs) -> Result<SceneConfig> {
    let mut cfg = match &global.config {
        Some(path) => SceneConfig::load(path)?,
        None => SceneConfig::default(),
    };
    for assignment in &global.set {
        cfg = cfg.with_override(assignment)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.global.jobs {
        Some(0) => Err(Error::config("jobs", "must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Fingerprint => cmd_fingerprint(&cli.global),
        Command::Simulate(args) => cmd_simulate(&cli.global, args),
        Command::Sweep(args) => cmd_sweep(&cli.global, args),
        Command::Baseline(args) => cmd_baseline(&cli.global, args),
    }
}

fn finish(
    out: &OutputDir,
    command: &str,
    config: &SceneConfig,
    sweep: Option<SweepParams>,
    started: f64,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        sweep,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: out.files().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    out.write_atomic("manifest.json", &text)
}

pub fn cmd_fingerprint(global: &GlobalArgs) -> Result<i32> {
    let started = unix_now();
    let cfg = resolve_config(global)?;
    let model = SceneModel::new(&cfg)?;
    let mut out = OutputDir::create(&global.out_dir)?;
    out.write("H.csv", &matrix_csv(model.gains.matrix()))?;
    out.write("J.csv", &matrix_csv(model.j.matrix()))?;
    out.write("Psi.csv", &matrix_csv(model.psi.matrix()))?;
    let pairs: Vec<[usize; 2]> = model.pairs.pairs().map(|(i, j)| [i, j]).collect();
    let anchors: Vec<[f64; 3]> = model
        .channel
        .leds
        .iter()
        .map(|l| [l.position.x, l.position.y, l.position.z])
        .collect();
    let cells: Vec<[f64; 2]> = model.grid.centers.iter().map(|c| [c.x, c.y]).collect();
    out.write_json(
        "meta.json",
        &json!({
            "anchors": model.gains.anchors(),
            "grid_points": model.grid.len(),
            "shapes": {
                "H": [model.gains.anchors(), model.grid.len()],
                "J": [model.j.matrix().nrows(), model.j.matrix().ncols()],
                "Psi": [model.psi.matrix().nrows(), model.psi.matrix().ncols()],
            },
            "column_order": "cell index, row-major with x varying fastest",
            "psi_row_order": "anchor pairs (i, j) with i <= j in lexicographic order",
            "psi_pairs": pairs,
            "anchor_positions": anchors,
            "cell_centers": cells,
            "lambertian_order": model.channel.order,
            "config": cfg,
        }),
    )?;
    finish(&out, "fingerprint", &cfg, None, started)?;
    Ok(EXIT_OK)
}

fn scatter_csv(outcome: &TrialOutcome, schemes: &[Scheme]) -> String {
    let mut text = String::from("trial,scheme,true_x,true_y,est_x,est_y\n");
    for &scheme in schemes {
        let Some(s) = outcome.scheme(scheme) else { continue };
        for (t, truth) in outcome.targets.true_positions.iter().enumerate() {
            let (ex, ey) = match s.assignment.get(t).and_then(|&e| s.estimates.get(e)) {
                Some(p) => (fmt_f64(p.x), fmt_f64(p.y)),
                None => (String::new(), String::new()),
            };
            push_record(
                &mut text,
                &[
                    "0".into(),
                    scheme.as_str().into(),
                    fmt_f64(truth.x),
                    fmt_f64(truth.y),
                    ex,
                    ey,
                ],
            );
        }
    }
    text
}

fn single_trial(
    global: &GlobalArgs,
    command: &str,
    cfg: SceneConfig,
    schemes: &[Scheme],
    dump_measurements: bool,
) -> Result<i32> {
    let started = unix_now();
    let model = SceneModel::new(&cfg)?;
    let outcome = run_trial(&model, cfg.targets, NoiseSetting::from_config(&cfg), schemes, cfg.seed)?;
    let mut out = OutputDir::create(&global.out_dir)?;
    out.write("scatter.csv", &scatter_csv(&outcome, schemes))?;
    out.write_json("trial.json", &json!({ "config": cfg, "trial": outcome }))?;
    if dump_measurements {
        let mut text = String::from("model,L,sigma2,values\n");
        for m in [&outcome.power, &outcome.correlation].into_iter().flatten() {
            let mut fields = vec![
                m.model.as_str().to_string(),
                m.snapshots.to_string(),
                fmt_f64(m.noise_floor),
            ];
            fields.extend(m.values.iter().map(|&v| fmt_f64(v)));
            push_record(&mut text, &fields);
        }
        out.write("measurements.csv", &text)?;
    }
    finish(&out, command, &cfg, None, started)?;
    for s in &outcome.schemes {
        if let Some(reason) = &s.result.failure {
            eprintln!("warning: {} failed: {reason}", s.result.scheme.as_str());
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<i32> {
    let mut cfg = resolve_config(global)?;
    if let Some(k) = args.k {
        cfg.targets = k;
    }
    if let Some(scheme) = args.scheme {
        cfg.scheme = scheme;
    }
    if let Some(solver) = args.solver {
        cfg.solver = solver;
    }
    cfg.validate()?;
    let scheme = cfg.scheme;
    single_trial(global, "simulate", cfg, &[scheme], args.dump_measurements)
}

pub fn cmd_baseline(global: &GlobalArgs, args: &BaselineArgs) -> Result<i32> {
    let mut cfg = resolve_config(global)?;
    if let Some(k) = args.k {
        cfg.targets = k;
    }
    cfg.scheme = Scheme::RssBaseline;
    cfg.validate()?;
    single_trial(global, "baseline", cfg, &[Scheme::RssBaseline], false)
}

pub fn cmd_sweep(global: &GlobalArgs, args: &SweepArgs) -> Result<i32> {
    let started = unix_now();
    let (cfg, params) = match &args.replay {
        Some(path) => {
            let manifest = RunManifest::load(path)?;
            let params = manifest
                .sweep
                .ok_or_else(|| Error::ConfigParse(format!("{}: not a sweep manifest", path.display())))?;
            (manifest.config, params)
        }
        None => {
            let mut cfg = resolve_config(global)?;
            if let Some(solver) = args.solver {
                cfg.solver = solver;
            }
            let params = SweepParams {
                k_list: args.k_list.clone(),
                snr_list: args.snr_list.clone(),
                trials: args.trials,
            };
            (cfg, params)
        }
    };
    if params.trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    if params.k_list.is_empty() || params.k_list.contains(&0) {
        return Err(Error::config("K_list", "must be a non-empty list of positive counts"));
    }
    if params.snr_list.is_empty() || params.snr_list.iter().any(|s| !s.is_finite()) {
        return Err(Error::config("snr_list", "must be a non-empty list of finite values"));
    }
    let model = SceneModel::new(&cfg)?;
    let max = crate::scenario::max_targets(model.grid.len());
    if let Some(&k) = params.k_list.iter().find(|&&k| k > max) {
        return Err(Error::TargetCount { k, max });
    }

    let report = run_campaign(&model, &params.k_list, &params.snr_list, params.trials)?;

    let mut csv = String::from("scheme,K,snr_db,L,trials,mean_error_m,std_error_m,success_rate\n");
    for r in &report.rows {
        push_record(
            &mut csv,
            &[
                r.scheme.as_str().into(),
                r.k.to_string(),
                fmt_f64(r.snr_db),
                r.snapshots.to_string(),
                r.trials.to_string(),
                fmt_f64(r.mean_error_m),
                fmt_f64(r.std_error_m),
                fmt_f64(r.success_rate),
            ],
        );
    }
    let mut out = OutputDir::create(&global.out_dir)?;
    out.write("report.csv", &csv)?;
    out.write_json("report.json", &report)?;
    finish(&out, "sweep", &cfg, Some(params), started)?;

    let dead = report.fully_failed();
    if dead.is_empty() {
        Ok(EXIT_OK)
    } else {
        for r in dead {
            eprintln!(
                "error: every {} trial failed at K={} snr={} dB",
                r.scheme.as_str(),
                r.k,
                r.snr_db
            );
        }
        Ok(EXIT_ALL_FAILED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut argv = vec!["vlp-sparse".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.push("--out-dir".into());
        argv.push(dir.display().to_string());
        run(argv)
    }

    fn lines(path: &Path) -> Vec<String> {
        fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
    }

    #[test]
    fn fingerprint_shapes_and_idempotence() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(run_in(&a, &["fingerprint"]), EXIT_OK);
        assert_eq!(run_in(&b, &["fingerprint"]), EXIT_OK);
        let j = lines(&a.join("J.csv"));
        assert_eq!(j.len(), 16);
        assert!(j.iter().all(|l| l.split(',').count() == 400));
        assert_eq!(lines(&a.join("Psi.csv")).len(), 136);
        assert_eq!(lines(&a.join("H.csv")).len(), 16);
        for f in ["H.csv", "J.csv", "Psi.csv", "meta.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        let manifest = RunManifest::load(&a.join("manifest.json")).unwrap();
        assert_eq!(manifest.outputs.len(), 4);
        assert!(manifest.verify(&a).unwrap());
    }

    #[test]
    fn csv_floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.886e-6, -2.5e-300, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn simulate_scatter_has_one_row_per_target() {
        let tmp = tempfile::tempdir().unwrap();
        for scheme in ["cocsm", "csm", "rss_baseline"] {
            let dir = tmp.path().join(scheme);
            let code = run_in(&dir, &["simulate", "--K", "8", "--scheme", scheme, "--set", "snapshots=2000"]);
            assert_eq!(code, EXIT_OK);
            let rows = lines(&dir.join("scatter.csv"));
            assert_eq!(rows[0], "trial,scheme,true_x,true_y,est_x,est_y");
            assert_eq!(rows.len(), 9);
            assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some(scheme)));
        }
    }

    #[test]
    fn simulate_is_deterministic_and_dumps_measurements() {
        let tmp = tempfile::tempdir().unwrap();
        let args = ["simulate", "--K", "3", "--seed", "5", "--set", "snapshots=1000", "--set", "snr_db=20", "--dump-measurements"];
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(run_in(&a, &args), EXIT_OK);
        assert_eq!(run_in(&b, &args), EXIT_OK);
        for f in ["scatter.csv", "trial.json", "measurements.csv"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        let m = lines(&a.join("measurements.csv"));
        assert_eq!(m.len(), 3);
        assert_eq!(m[1].split(',').count(), 3 + 16);
        assert_eq!(m[2].split(',').count(), 3 + 136);
    }

    #[test]
    fn baseline_writes_per_target_rows() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(run_in(tmp.path(), &["baseline", "--K", "8"]), EXIT_OK);
        assert_eq!(lines(&tmp.path().join("scatter.csv")).len(), 9);
    }

    #[test]
    fn minimal_sweep_has_three_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let code = run_in(tmp.path(), &["sweep", "--K-list", "2", "--snr-list", "20", "--trials", "1", "--set", "snapshots=500"]);
        assert_eq!(code, EXIT_OK);
        let rows = lines(&tmp.path().join("report.csv"));
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "scheme,K,snr_db,L,trials,mean_error_m,std_error_m,success_rate");
        let manifest = RunManifest::load(&tmp.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.sweep.as_ref().unwrap().trials, 1);
        assert!(manifest.verify(tmp.path()).unwrap());
    }

    #[test]
    fn invalid_input_exits_2_without_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let cases: [&[&str]; 5] = [
            &["simulate", "--set", "grid_pitch=0.3"],
            &["simulate", "--set", "no_such_key=1"],
            &["sweep", "--K-list", "200"],
            &["simulate", "--scheme", "nope"],
            &["fingerprint", "--bogus"],
        ];
        for (n, args) in cases.iter().enumerate() {
            let dir = tmp.path().join(n.to_string());
            assert_eq!(run_in(&dir, args), EXIT_USAGE, "{args:?}");
            assert!(!dir.exists(), "{args:?} left outputs behind");
        }
    }

    #[test]
    fn config_file_errors_name_the_line() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("scene.json");
        fs::write(&path, "{\n  \"grid_pitch\": 0.2,\n  \"snapshots\": ,\n}\n").unwrap();
        let err = resolve_config(&GlobalArgs {
            config: Some(path),
            set: vec![],
            seed: None,
            jobs: None,
            out_dir: tmp.path().into(),
        })
        .unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn every_subcommand_has_help() {
        for sub in ["fingerprint", "simulate", "sweep", "baseline"] {
            let err = Cli::try_parse_from(["vlp-sparse", sub, "--help"]).unwrap_err();
            assert_eq!(err.kind(), clap::error::ErrorKind::DisplayHelp);
            assert_eq!(err.exit_code(), 0);
        }
    }
}

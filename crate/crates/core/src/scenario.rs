//! Room geometry, the localization grid, LED anchors and target placement.
//!
//! [`SceneConfig`] is the single source of truth for a run. It serializes to a
//! flat JSON object whose keys are the field names below (the photodetector
//! optics are flattened into the same object).

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn xy(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn at_height(&self, z: f64) -> Point3 {
        Point3::new(self.x, self.y, z)
    }
}

/// Sparse solver used by the CS pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Omp,
    Ista,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Csm,
    Cocsm,
    RssBaseline,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Csm, Scheme::Cocsm, Scheme::RssBaseline];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Csm => "csm",
            Scheme::Cocsm => "cocsm",
            Scheme::RssBaseline => "rss_baseline",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csm" => Ok(Scheme::Csm),
            "cocsm" => Ok(Scheme::Cocsm),
            "rss_baseline" => Ok(Scheme::RssBaseline),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(SolverKind::Omp),
            "ista" => Ok(SolverKind::Ista),
            other => Err(Error::config("solver", format!("unknown solver `{other}`"))),
        }
    }
}

/// Photodetector optics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdOptics {
    /// Physical detector area in m².
    pub detector_area: f64,
    pub filter_gain: f64,
    pub concentrator_gain: f64,
    /// Field of view in degrees.
    pub fov: f64,
}

impl Default for PdOptics {
    fn default() -> Self {
        Self {
            detector_area: 1e-4,
            filter_gain: 1.0,
            concentrator_gain: 1.0,
            fov: 85.0,
        }
    }
}

impl PdOptics {
    pub fn fov_rad(&self) -> f64 {
        self.fov.to_radians()
    }

    /// `A_det · G_filter · G_conc`.
    pub fn aperture_gain(&self) -> f64 {
        self.detector_area * self.filter_gain * self.concentrator_gain
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detector_area > 0.0) {
            return Err(Error::config("detector_area", "must be > 0"));
        }
        if !(self.filter_gain > 0.0) {
            return Err(Error::config("filter_gain", "must be > 0"));
        }
        if !(self.concentrator_gain > 0.0) {
            return Err(Error::config("concentrator_gain", "must be > 0"));
        }
        if !(self.fov > 0.0 && self.fov <= 90.0) {
            return Err(Error::config("fov", "must satisfy 0 < fov <= 90 degrees"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Room extents (x, y, z) in meters.
    pub room_size: [f64; 3],
    pub grid_pitch: f64,
    /// Height of the receiver plane above the floor.
    pub receiver_height: f64,
    pub led_rows: usize,
    pub led_cols: usize,
    pub led_height: f64,
    #[serde(flatten)]
    pub pd: PdOptics,
    /// LED half-power angle in degrees.
    pub half_power_angle: f64,
    /// AWGN variance, used when `snr_db` is null.
    pub noise_variance: f64,
    /// When set, the noise variance of each trial is derived from this SNR.
    pub snr_db: Option<f64>,
    pub snapshots: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub scheme: Scheme,
    /// Number of targets K.
    pub targets: usize,
    /// Place targets exactly on cell centers.
    pub on_grid: bool,
    /// ISTA regularization as a fraction of `‖Aᵀb‖∞`.
    pub ista_lambda: f64,
    pub ista_max_iters: usize,
    pub ista_tol: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_size: [4.0, 4.0, 3.0],
            grid_pitch: 0.2,
            receiver_height: 0.85,
            led_rows: 4,
            led_cols: 4,
            led_height: 3.0,
            pd: PdOptics::default(),
            half_power_angle: 60.0,
            noise_variance: 0.0,
            snr_db: None,
            snapshots: 10_000,
            seed: 1,
            solver: SolverKind::Omp,
            scheme: Scheme::Cocsm,
            targets: 8,
            on_grid: false,
            ista_lambda: 1e-3,
            ista_max_iters: 20_000,
            ista_tol: 1e-10,
        }
    }
}

fn cells_along(extent: f64, pitch: f64, key: &str) -> Result<usize> {
    let cells = (extent / pitch).round();
    if cells < 1.0 || (cells * pitch - extent).abs() > 1e-9 * extent.max(1.0) {
        return Err(Error::config(
            key,
            format!("pitch {pitch} does not tile extent {extent} into whole cells"),
        ));
    }
    Ok(cells as usize)
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [x, y, z] = self.room_size;
        if !(x > 0.0 && y > 0.0 && z > 0.0) || !(x.is_finite() && y.is_finite() && z.is_finite())
        {
            return Err(Error::config("room_size", "all extents must be finite and > 0"));
        }
        if !(self.grid_pitch > 0.0) {
            return Err(Error::config("grid_pitch", "must be > 0"));
        }
        cells_along(x, self.grid_pitch, "grid_pitch")?;
        cells_along(y, self.grid_pitch, "grid_pitch")?;
        if !(self.receiver_height > 0.0) {
            return Err(Error::config("receiver_height", "must be > 0"));
        }
        if !(self.receiver_height < self.led_height) {
            return Err(Error::config(
                "receiver_height",
                "must be below led_height",
            ));
        }
        if !(self.led_height <= z) {
            return Err(Error::config("led_height", "must not exceed the room height"));
        }
        if self.led_rows == 0 || self.led_cols == 0 {
            return Err(Error::config("led_rows", "LED lattice needs at least one row and column"));
        }
        self.pd.validate()?;
        if !(self.half_power_angle > 0.0 && self.half_power_angle < 90.0) {
            return Err(Error::config(
                "half_power_angle",
                "must satisfy 0 < angle < 90 degrees",
            ));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::config("noise_variance", "must be finite and >= 0"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::config("snr_db", "must be finite or null"));
            }
        }
        if self.snapshots == 0 {
            return Err(Error::config("snapshots", "must be >= 1"));
        }
        if self.targets == 0 {
            return Err(Error::config("targets", "must be >= 1"));
        }
        if !(self.ista_lambda > 0.0) {
            return Err(Error::config("ista_lambda", "must be > 0"));
        }
        if self.ista_max_iters == 0 {
            return Err(Error::config("ista_max_iters", "must be >= 1"));
        }
        if !(self.ista_tol > 0.0) {
            return Err(Error::config("ista_tol", "must be > 0"));
        }
        Ok(())
    }

    pub fn anchor_count(&self) -> usize {
        self.led_rows * self.led_cols
    }

    /// Vertical LED to receiver separation.
    pub fn vertical_separation(&self) -> f64 {
        self.led_height - self.receiver_height
    }

    pub fn room_diagonal(&self) -> f64 {
        self.room_size[0].hypot(self.room_size[1])
    }

    /// All keys accepted in a config document.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(SceneConfig::default()) {
            Ok(Value::Object(map)) => map.keys().cloned().collect(),
            _ => unreachable!("SceneConfig serializes to an object"),
        }
    }

    /// Parses a JSON document over the defaults. Missing keys keep their
    /// default value; unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| {
            Error::ConfigParse(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        let Value::Object(doc) = doc else {
            return Err(Error::ConfigParse("top level must be an object".into()));
        };
        Self::default().merged(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn merged(&self, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut base) = serde_json::to_value(self)? else {
            unreachable!("SceneConfig serializes to an object");
        };
        for (key, value) in overrides {
            if !base.contains_key(&key) {
                return Err(Error::config(&key, "unknown key"));
            }
            base.insert(key, value);
        }
        let cfg: SceneConfig = serde_json::from_value(Value::Object(base))
            .map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a `key=value` override. The value is read as JSON, falling
    /// back to a bare string (so `scheme=csm` works unquoted).
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut map = Map::new();
        map.insert(key.to_string(), value);
        self.merged(map)
    }
}

/// The discrete receiver-plane grid. Cells are indexed row-major with the
/// x index varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridModel {
    pub cols: usize,
    pub rows: usize,
    pub pitch: f64,
    pub centers: Vec<Point3>,
}

impl GridModel {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, cell: usize) -> Point3 {
        self.centers[cell]
    }

    /// Cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Point2) -> usize {
        let ix = ((p.x / self.pitch).floor().max(0.0) as usize).min(self.cols - 1);
        let iy = ((p.y / self.pitch).floor().max(0.0) as usize).min(self.rows - 1);
        iy * self.cols + ix
    }

    pub fn height(&self) -> f64 {
        self.centers[0].z
    }
}

pub fn build_grid(config: &SceneConfig) -> Result<GridModel> {
    let pitch = config.grid_pitch;
    if !(pitch > 0.0) {
        return Err(Error::config("grid_pitch", "must be > 0"));
    }
    let cols = cells_along(config.room_size[0], pitch, "grid_pitch")?;
    let rows = cells_along(config.room_size[1], pitch, "grid_pitch")?;
    let z = config.receiver_height;
    let centers = (0..rows)
        .flat_map(|iy| {
            (0..cols).map(move |ix| {
                Point3::new((ix as f64 + 0.5) * pitch, (iy as f64 + 0.5) * pitch, z)
            })
        })
        .collect();
    Ok(GridModel {
        cols,
        rows,
        pitch,
        centers,
    })
}

/// A downward-facing ceiling LED.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedAnchor {
    pub index: usize,
    pub position: Point3,
}

/// Places a `led_rows × led_cols` lattice with half-spacing margins. Index
/// order is row-major with x varying fastest.
pub fn place_leds(config: &SceneConfig) -> Result<Vec<LedAnchor>> {
    let [x, y, z] = config.room_size;
    if config.led_rows == 0 || config.led_cols == 0 {
        return Err(Error::Geometry("LED lattice must have at least one LED".into()));
    }
    if config.led_height > z || config.led_height <= 0.0 {
        return Err(Error::Geometry(format!(
            "LED plane at {} m lies outside a room of height {z} m",
            config.led_height
        )));
    }
    let dx = x / config.led_cols as f64;
    let dy = y / config.led_rows as f64;
    let leds = (0..config.led_rows)
        .flat_map(|r| (0..config.led_cols).map(move |c| (r, c)))
        .enumerate()
        .map(|(index, (r, c))| LedAnchor {
            index,
            position: Point3::new(
                (c as f64 + 0.5) * dx,
                (r as f64 + 0.5) * dy,
                config.led_height,
            ),
        })
        .collect();
    Ok(leds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSet {
    pub true_positions: Vec<Point2>,
    pub true_cells: Vec<usize>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.true_cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_cells.is_empty()
    }

    /// Builds a set from explicit cells placed at their centers.
    pub fn on_cells(grid: &GridModel, cells: &[usize]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &c in cells {
            if c >= grid.len() {
                return Err(Error::CellOutOfRange {
                    index: c,
                    n: grid.len(),
                });
            }
            if !seen.insert(c) {
                return Err(Error::DuplicateCell(c));
            }
        }
        Ok(Self {
            true_positions: cells.iter().map(|&c| grid.center(c).xy()).collect(),
            true_cells: cells.to_vec(),
        })
    }

    /// Mean distance from each target to its cell center.
    pub fn mean_center_offset(&self, grid: &GridModel) -> f64 {
        let total: f64 = self
            .true_positions
            .iter()
            .zip(&self.true_cells)
            .map(|(p, &c)| p.distance(&grid.center(c).xy()))
            .sum();
        total / self.len() as f64
    }
}

pub fn max_targets(n: usize) -> usize {
    n / 4
}

/// Draws `k` distinct cells uniformly; positions are cell centers when
/// `on_grid`, otherwise uniform within each cell.
pub fn sample_targets<R: Rng + ?Sized>(
    grid: &GridModel,
    k: usize,
    on_grid: bool,
    rng: &mut R,
) -> Result<TargetSet> {
    let max = max_targets(grid.len());
    if k == 0 || k > max {
        return Err(Error::TargetCount { k, max });
    }
    let cells = index::sample(rng, grid.len(), k).into_vec();
    let half = grid.pitch / 2.0;
    let true_positions = cells
        .iter()
        .map(|&c| {
            let center = grid.center(c).xy();
            if on_grid {
                center
            } else {
                Point2::new(
                    center.x + rng.random_range(-half..half),
                    center.y + rng.random_range(-half..half),
                )
            }
        })
        .collect();
    Ok(TargetSet {
        true_positions,
        true_cells: cells,
    })
}

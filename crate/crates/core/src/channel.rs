//! Lambertian line-of-sight channel and the grid fingerprints built from it.
//!
//! Gains are real and nonnegative (intensity modulation), so the conjugates
//! in the correlation model reduce to plain products.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{GridModel, LedAnchor, PdOptics, Point2, Point3};

/// Lambertian order `m = -ln 2 / ln(cos α½)`.
pub fn lambertian_order(half_power_deg: f64) -> Result<f64> {
    if !(half_power_deg > 0.0 && half_power_deg < 90.0) {
        return Err(Error::config(
            "half_power_angle",
            format!("{half_power_deg} is outside (0, 90) degrees"),
        ));
    }
    Ok(-std::f64::consts::LN_2 / half_power_deg.to_radians().cos().ln())
}

/// Radiant intensity `((m+1)/2π) cosᵐ α` for irradiation angle `alpha`.
pub fn radiant_intensity(m: f64, alpha: f64) -> f64 {
    let c = alpha.cos().max(0.0);
    (m + 1.0) / (2.0 * std::f64::consts::PI) * c.powf(m)
}

/// Effective detector area at incidence angle `phi`; zero outside the FOV.
pub fn effective_area(phi: f64, pd: &PdOptics) -> f64 {
    if phi > pd.fov_rad() {
        0.0
    } else {
        pd.aperture_gain() * phi.cos()
    }
}

const LED_NORMAL: [f64; 3] = [0.0, 0.0, -1.0];
const PD_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

fn angle_between(v: [f64; 3], normal: [f64; 3], len: f64) -> f64 {
    let cos = (v[0] * normal[0] + v[1] * normal[1] + v[2] * normal[2]) / len;
    cos.clamp(-1.0, 1.0).acos()
}

/// LoS gain from a downward LED to an upward photodetector at `point`.
pub fn channel_gain(led: &LedAnchor, point: &Point3, pd: &PdOptics, m: f64) -> Result<f64> {
    let dz = led.position.z - point.z;
    if !(dz > 0.0) {
        return Err(Error::Geometry(format!(
            "receiver at z = {} is not below LED {} at z = {}",
            point.z, led.index, led.position.z
        )));
    }
    let d = led.position.distance(point);
    let to_pd = [
        point.x - led.position.x,
        point.y - led.position.y,
        point.z - led.position.z,
    ];
    let to_led = [-to_pd[0], -to_pd[1], -to_pd[2]];
    let alpha = angle_between(to_pd, LED_NORMAL, d);
    let phi = angle_between(to_led, PD_NORMAL, d);
    Ok(radiant_intensity(m, alpha) * effective_area(phi, pd) / (d * d))
}

/// Closed form for vertical orientations:
/// `((m+1)/2π) · A_det G_f G_c · Δz^{m+1} / d^{m+3}` inside the FOV.
pub fn vertical_gain_closed_form(led: &Point3, point: &Point3, pd: &PdOptics, m: f64) -> f64 {
    let dz = led.z - point.z;
    let d = led.distance(point);
    if (dz / d).acos() > pd.fov_rad() {
        return 0.0;
    }
    lambertian_constant(pd, m) * dz.powf(m + 1.0) / d.powf(m + 3.0)
}

/// `C = ((m+1)/2π) · A_det G_f G_c`.
pub fn lambertian_constant(pd: &PdOptics, m: f64) -> f64 {
    (m + 1.0) / (2.0 * std::f64::consts::PI) * pd.aperture_gain()
}

/// Everything needed to evaluate gains at arbitrary receiver positions.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub leds: Vec<LedAnchor>,
    pub pd: PdOptics,
    pub order: f64,
    pub receiver_height: f64,
}

impl ChannelModel {
    pub fn anchors(&self) -> usize {
        self.leds.len()
    }

    /// Gain column for a receiver at horizontal position `p`.
    pub fn gains_at(&self, p: Point2) -> Result<Vec<f64>> {
        let point = p.at_height(self.receiver_height);
        self.leds
            .iter()
            .map(|led| channel_gain(led, &point, &self.pd, self.order))
            .collect()
    }

    /// `M × K` gains at arbitrary (typically off-grid) positions.
    pub fn gains_for_positions(&self, positions: &[Point2]) -> Result<GainMatrix> {
        let cols = positions
            .iter()
            .map(|&p| self.gains_at(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(GainMatrix::from_columns(self.anchors(), &cols))
    }
}

/// Channel gains `h_ij`, anchors by rows and receiver positions by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(pub DMatrix<f64>);

impl GainMatrix {
    fn from_columns(rows: usize, cols: &[Vec<f64>]) -> Self {
        let mut m = DMatrix::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        GainMatrix(m)
    }

    pub fn anchors(&self) -> usize {
        self.0.nrows()
    }

    pub fn points(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn build_gain_matrix(
    leds: &[LedAnchor],
    grid: &GridModel,
    pd: &PdOptics,
    m: f64,
) -> Result<GainMatrix> {
    let cols = grid
        .centers
        .par_iter()
        .map(|c| {
            leds.iter()
                .map(|led| channel_gain(led, c, pd, m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainMatrix::from_columns(leds.len(), &cols))
}

/// Power fingerprint `J`, the elementwise square of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintJ(pub DMatrix<f64>);

impl FingerprintJ {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn build_power_fingerprint(h: &GainMatrix) -> FingerprintJ {
    FingerprintJ(h.0.map(|v| v * v))
}

/// Bijection between anchor pairs `(i, j)`, `i ≤ j`, and rows of `Ψ` in
/// lexicographic order: `(0,0), (0,1), …, (0,M-1), (1,1), …, (M-1,M-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairIndexMap {
    anchors: usize,
}

impl PairIndexMap {
    pub fn new(anchors: usize) -> Self {
        Self { anchors }
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors * (self.anchors + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.anchors == 0
    }

    /// Row for the unordered pair `{i, j}`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j < self.anchors);
        i * (2 * self.anchors - i + 1) / 2 + (j - i)
    }

    pub fn pair(&self, row: usize) -> (usize, usize) {
        let mut start = 0;
        for i in 0..self.anchors {
            let width = self.anchors - i;
            if row < start + width {
                return (i, i + row - start);
            }
            start += width;
        }
        panic!("row {row} out of range for {} pairs", self.len());
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.anchors).flat_map(move |i| (i..self.anchors).map(move |j| (i, j)))
    }

    pub fn is_diagonal(&self, row: usize) -> bool {
        let (i, j) = self.pair(row);
        i == j
    }

    /// Rows with `i = j`, in anchor order.
    pub fn diagonal_rows(&self) -> Vec<usize> {
        (0..self.anchors).map(|i| self.index(i, i)).collect()
    }
}

/// Correlation fingerprint `Ψ`; row `(i, j)` holds `h_in · h_jn`.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintPsi(pub DMatrix<f64>);

impl FingerprintPsi {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn build_correlation_fingerprint(h: &GainMatrix) -> (FingerprintPsi, PairIndexMap) {
    let pairs = PairIndexMap::new(h.anchors());
    let mut psi = DMatrix::zeros(pairs.len(), h.points());
    for (r, (i, j)) in pairs.pairs().enumerate() {
        for n in 0..h.points() {
            psi[(r, n)] = h.0[(i, n)] * h.0[(j, n)];
        }
    }
    (FingerprintPsi(psi), pairs)
}

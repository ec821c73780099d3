//! Conventional per-target RSS lateration.
//!
//! Each anchor's received power is inverted through the vertical-orientation
//! closed form of the Lambertian gain to a distance, projected to a
//! horizontal range, and the circle equations are differenced against the
//! strongest anchor and solved by linear least squares.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::channel::lambertian_constant;
use crate::error::{Error, Result};
use crate::scenario::{LedAnchor, PdOptics, Point2};

/// Horizontal range to each anchor implied by its (floor-removed) received
/// power, `None` for anchors with no usable power.
pub fn ranges_from_rss(rss: &[f64], leds: &[LedAnchor], pd: &PdOptics, m: f64, receiver_height: f64) -> Vec<Option<f64>> {
    let c = lambertian_constant(pd, m);
    rss.iter()
        .zip(leds)
        .map(|(&p, led)| {
            if !(p > 0.0) {
                return None;
            }
            let h = p.sqrt();
            let dz = led.position.z - receiver_height;
            let d = (c * dz.powf(m + 1.0) / h).powf(1.0 / (m + 3.0));
            Some((d * d - dz * dz).max(0.0).sqrt())
        })
        .collect()
}

pub fn rss_baseline_locate(
    rss: &[f64],
    leds: &[LedAnchor],
    pd: &PdOptics,
    m: f64,
    receiver_height: f64,
) -> Result<Point2> {
    if rss.len() != leds.len() {
        return Err(Error::Shape(format!("{} RSS values for {} anchors", rss.len(), leds.len())));
    }
    let ranges = ranges_from_rss(rss, leds, pd, m, receiver_height);
    let usable: Vec<usize> = (0..leds.len()).filter(|&i| ranges[i].is_some()).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientAnchors { usable: usable.len() });
    }
    let reference = *usable
        .iter()
        .max_by(|&&a, &&b| rss[a].total_cmp(&rss[b]).then(b.cmp(&a)))
        .expect("non-empty");
    let (xr, yr) = (leds[reference].position.x, leds[reference].position.y);
    let rr = ranges[reference].unwrap();

    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for &i in usable.iter().filter(|&&i| i != reference) {
        let (xi, yi) = (leds[i].position.x, leds[i].position.y);
        let ri = ranges[i].unwrap();
        let row = Vector2::new(2.0 * (xi - xr), 2.0 * (yi - yr));
        let rhs = rr * rr - ri * ri + xi * xi - xr * xr + yi * yi - yr * yr;
        ata += row * row.transpose();
        atb += row * rhs;
    }
    let scale = ata.trace();
    if !(scale > 0.0) || ata.determinant().abs() <= 1e-12 * scale * scale {
        return Err(Error::CollinearAnchors);
    }
    let sol = ata.lu().solve(&atb).ok_or(Error::CollinearAnchors)?;
    Ok(Point2::new(sol.x, sol.y))
}

/// Per-anchor received power of one target averaged over `snapshots`
/// pilot intervals, `(1/L) Σ (h_i + ω_i(ℓ))²`.
///
/// Drawn exactly in distribution: the sum is `σ²` times a noncentral χ²
/// with `L` degrees of freedom, i.e. `σ²((√L h/σ + Z)² + χ²_{L−1})`.
pub fn synthesize_rss<R: Rng + ?Sized>(
    gains: &[f64],
    noise_variance: f64,
    snapshots: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if snapshots == 0 {
        return Err(Error::NoSnapshots);
    }
    if noise_variance == 0.0 {
        return Ok(gains.iter().map(|h| h * h).collect());
    }
    let l = snapshots as f64;
    let sigma = noise_variance.sqrt();
    let chi = (snapshots > 1).then(|| ChiSquared::new(l - 1.0).expect("dof > 0"));
    Ok(gains
        .iter()
        .map(|&h| {
            let z: f64 = rng.sample(StandardNormal);
            let central = (l.sqrt() * h / sigma + z).powi(2);
            let rest = chi.as_ref().map_or(0.0, |c| c.sample(rng));
            noise_variance * (central + rest) / l
        })
        .collect())
}

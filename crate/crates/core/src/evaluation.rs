//! Goodness of fit: integrated squared error against a true intensity or a
//! kernel-smoothed empirical intensity, and the kernel estimator itself.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster};

/// Riemann sum of `(fitted - truth)^2` over pixels where both are finite.
pub fn mise_true(fitted: &SpatialRaster, truth: &SpatialRaster) -> Result<f64> {
    fitted.grid().ensure_same(truth.grid())?;
    let sum: f64 = fitted
        .band(0)
        .iter()
        .zip(truth.band(0))
        .filter(|(f, t)| f.is_finite() && t.is_finite())
        .map(|(f, t)| (f - t) * (f - t))
        .sum();
    Ok(sum * fitted.grid().pixel_area())
}

fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-0.5 * d2 / (sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// `P(a <= N(0, 1) <= b)` for `a <= b`.
fn normal_mass(a: f64, b: f64) -> f64 {
    0.5 * (erf(b / SQRT_2) - erf(a / SQRT_2))
}

/// Mass of the isotropic Gaussian centered at `(x, y)` that falls inside the
/// grid's window; the uniform edge correction is its reciprocal.
pub fn window_mass(grid: &Grid, x: f64, y: f64, sigma: f64) -> f64 {
    let w = grid.window();
    normal_mass((w.xmin() - x) / sigma, (w.xmax() - x) / sigma)
        * normal_mass((w.ymin() - y) / sigma, (w.ymax() - y) / sigma)
}

/// Edge-corrected Gaussian kernel intensity estimate at the pixel centers.
pub fn kernel_intensity(pattern: &PointPattern, bandwidth: f64, grid: &Grid) -> Result<SpatialRaster> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let values = grid
        .centers()
        .map(|[x, y]| {
            let sum: f64 = pattern
                .points()
                .iter()
                .map(|&[px, py]| gaussian((x - px).powi(2) + (y - py).powi(2), bandwidth))
                .sum();
            sum / window_mass(grid, x, y, bandwidth)
        })
        .collect();
    SpatialRaster::single(*grid, values)
}

/// Least-squares cross-validation score of the intensity kernel estimator:
/// `int lambda~^2 - 2 sum_i lambda~_{-i}(x_i)`, with the squared integral
/// taken over the plane.
pub fn lscv_score(pattern: &PointPattern, bandwidth: f64) -> f64 {
    let pts = pattern.points();
    let wide = SQRT_2 * bandwidth;
    let mut squared = 0.0;
    let mut loo = 0.0;
    for (i, a) in pts.iter().enumerate() {
        squared += gaussian(0.0, wide);
        for b in &pts[i + 1..] {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            squared += 2.0 * gaussian(d2, wide);
            loo += 2.0 * gaussian(d2, bandwidth);
        }
    }
    squared - 2.0 * loo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSelection {
    pub bandwidth: f64,
    /// `(bandwidth, score)` per candidate.
    pub curve: Vec<(f64, f64)>,
}

/// Minimizes [`lscv_score`] over `bw_grid`; ties go to the larger bandwidth.
pub fn select_smoothing_bandwidth(pattern: &PointPattern, bw_grid: &[f64]) -> Result<SmoothingSelection> {
    if bw_grid.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth grid".into()));
    }
    if pattern.len() < 2 {
        return Err(Error::Precondition(format!(
            "bandwidth cross-validation needs at least two points, got {}",
            pattern.len()
        )));
    }
    if let Some(bad) = bw_grid.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bad}")));
    }
    let curve: Vec<(f64, f64)> = bw_grid.iter().map(|&h| (h, lscv_score(pattern, h))).collect();
    let mut best = curve[0];
    for &(h, s) in &curve[1..] {
        if s < best.1 || (s == best.1 && h > best.0) {
            best = (h, s);
        }
    }
    Ok(SmoothingSelection {
        bandwidth: best.0,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMise {
    pub value: f64,
    pub bandwidth: f64,
}

/// Integrated squared difference between a fitted intensity and the kernel
/// estimate at the cross-validated bandwidth.
pub fn mise_residual(fitted: &SpatialRaster, pattern: &PointPattern, bw_grid: &[f64]) -> Result<ResidualMise> {
    let bandwidth = select_smoothing_bandwidth(pattern, bw_grid)?.bandwidth;
    let smooth = kernel_intensity(pattern, bandwidth, fitted.grid())?;
    Ok(ResidualMise {
        value: mise_true(fitted, &smooth)?,
        bandwidth,
    })
}

/// Per-model MISE over a set of replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub id: String,
    pub replicates: usize,
    pub global: Option<f64>,
    pub local: Option<f64>,
    pub tessellated: Option<f64>,
}

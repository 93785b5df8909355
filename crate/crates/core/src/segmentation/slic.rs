//! SLIC superpixels over standardized multi-band rasters.
//!
//! Distances combine the band difference `d_c` with the pixel-unit spatial
//! distance `d_s`: `D^2 = d_c^2 + g d_s^2 / S^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, SpatialRaster};

use super::connectivity::enforce_connectivity;

/// Superpixel count the default interval aims for.
pub const TARGET_SUPERPIXELS: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicParams {
    /// Initial center spacing in pixels.
    #[serde(rename = "S")]
    pub s: usize,
    pub g: f64,
    #[serde(default = "default_iterations")]
    pub n_iter: usize,
}

fn default_iterations() -> usize {
    10
}

impl SlicParams {
    pub fn new(s: usize, g: f64) -> Self {
        Self {
            s,
            g,
            n_iter: default_iterations(),
        }
    }

    /// `S = max(4, round(sqrt(pixels / 400)))`, `g = 1`, ten iterations.
    pub fn default_for(pixels: usize) -> Self {
        let s = ((pixels as f64 / TARGET_SUPERPIXELS).sqrt().round() as usize).max(4);
        Self::new(s, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(Error::InvalidArgument(format!("SLIC interval S must be >= 2, got {}", self.s)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidArgument(format!("compactness g must be positive, got {}", self.g)));
        }
        if self.n_iter == 0 {
            return Err(Error::InvalidArgument("SLIC needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Center of a superpixel in pixel coordinates plus its mean feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub col: f64,
    pub row: f64,
    pub values: Vec<f64>,
}

/// Labelled superpixels; label 0 marks masked pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub grid: Grid,
    pub labels: Vec<u32>,
    /// `centers[l - 1]` belongs to label `l`.
    pub centers: Vec<Center>,
    pub counts: Vec<usize>,
    /// Standardized band values per pixel (NaN where masked).
    pub features: Vec<Vec<f64>>,
}

impl SuperpixelMap {
    pub fn n_superpixels(&self) -> usize {
        self.centers.len()
    }

    /// Rebuilds centers and counts as member means of the current labels.
    pub fn from_labels(grid: Grid, labels: Vec<u32>, features: Vec<Vec<f64>>) -> Self {
        let m = labels.iter().copied().max().unwrap_or(0) as usize;
        let bands = features.len();
        let mut sums = vec![(0.0, 0.0, vec![0.0; bands]); m];
        let mut counts = vec![0usize; m];
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let (col, row) = grid.col_row(i);
            let s = &mut sums[l as usize - 1];
            s.0 += col as f64;
            s.1 += row as f64;
            for b in 0..bands {
                s.2[b] += features[b][i];
            }
            counts[l as usize - 1] += 1;
        }
        let centers = sums
            .into_iter()
            .zip(&counts)
            .map(|((c, r, v), &n)| {
                let n = n.max(1) as f64;
                Center {
                    col: c / n,
                    row: r / n,
                    values: v.into_iter().map(|x| x / n).collect(),
                }
            })
            .collect();
        Self {
            grid,
            labels,
            centers,
            counts,
            features,
        }
    }
}

/// Raw SLIC clustering before connectivity enforcement.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicRun {
    pub grid: Grid,
    /// 1-based index into `centers`, 0 where masked.
    pub labels: Vec<u32>,
    /// Centers the final labels were assigned against.
    pub centers: Vec<Center>,
    /// Total `D^2` after every assignment and every center update.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub features: Vec<Vec<f64>>,
    pub params: SlicParams,
}

/// Centers each band on its in-mask mean and scales by its in-mask standard
/// deviation; a pixel is masked when any band is NaN.
pub fn standardize(maps: &SpatialRaster) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n = maps.grid().len();
    let mask: Vec<bool> = (0..n)
        .map(|i| maps.bands().iter().all(|b| b[i].is_finite()))
        .collect();
    let count = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let features = maps
        .bands()
        .iter()
        .map(|band| {
            let mean = (0..n).filter(|&i| mask[i]).map(|i| band[i]).sum::<f64>() / count;
            let var = (0..n)
                .filter(|&i| mask[i])
                .map(|i| (band[i] - mean).powi(2))
                .sum::<f64>()
                / count;
            let sd = var.sqrt();
            (0..n)
                .map(|i| match (mask[i], sd > 0.0) {
                    (false, _) => f64::NAN,
                    (true, true) => (band[i] - mean) / sd,
                    (true, false) => 0.0,
                })
                .collect()
        })
        .collect();
    (features, mask)
}

/// Squared SLIC distance between pixel `i` and `center`.
pub fn distance_sq(
    grid: &Grid,
    features: &[Vec<f64>],
    i: usize,
    center: &Center,
    params: &SlicParams,
) -> f64 {
    let (col, row) = grid.col_row(i);
    let dc: f64 = features
        .iter()
        .zip(&center.values)
        .map(|(band, c)| (band[i] - c).powi(2))
        .sum();
    let ds = (col as f64 - center.col).powi(2) + (row as f64 - center.row).powi(2);
    let s = params.s as f64;
    dc + params.g * ds / (s * s)
}

/// True when `center` lies in the `2S x 2S` search window of pixel `i`.
pub fn in_search_window(grid: &Grid, i: usize, center: &Center, params: &SlicParams) -> bool {
    let (col, row) = grid.col_row(i);
    let s = params.s as f64;
    (col as f64 - center.col).abs() <= s && (row as f64 - center.row).abs() <= s
}

fn initial_centers(grid: &Grid, features: &[Vec<f64>], mask: &[bool], s: usize) -> Vec<Center> {
    let ncx = ((grid.nx() as f64 / s as f64).round() as usize).max(1);
    let ncy = ((grid.ny() as f64 / s as f64).round() as usize).max(1);
    let sx = grid.nx() as f64 / ncx as f64;
    let sy = grid.ny() as f64 / ncy as f64;
    let mut centers = Vec::new();
    for j in 0..ncy {
        for i in 0..ncx {
            let col = (i as f64 + 0.5) * sx - 0.5;
            let row = (j as f64 + 0.5) * sy - 0.5;
            // block mean of the unmasked pixels this center starts from
            let c0 = (i as f64 * sx).floor() as usize;
            let c1 = (((i + 1) as f64 * sx).ceil() as usize).min(grid.nx());
            let r0 = (j as f64 * sy).floor() as usize;
            let r1 = (((j + 1) as f64 * sy).ceil() as usize).min(grid.ny());
            let mut values = vec![0.0; features.len()];
            let mut n = 0usize;
            for r in r0..r1 {
                for c in c0..c1 {
                    let idx = grid.index(c, r);
                    if mask[idx] {
                        for (v, band) in values.iter_mut().zip(features) {
                            *v += band[idx];
                        }
                        n += 1;
                    }
                }
            }
            if n > 0 {
                values.iter_mut().for_each(|v| *v /= n as f64);
                centers.push(Center { col, row, values });
            }
        }
    }
    centers
}

fn assign(
    grid: &Grid,
    features: &[Vec<f64>],
    mask: &[bool],
    centers: &[Center],
    previous: &[u32],
    params: &SlicParams,
) -> Vec<(u32, f64)> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if !mask[i] {
                return (0, 0.0);
            }
            let mut best: Option<(usize, f64)> = None;
            for (c, center) in centers.iter().enumerate() {
                let current = previous[i] as usize == c + 1;
                if !current && !in_search_window(grid, i, center, params) {
                    continue;
                }
                let d = distance_sq(grid, features, i, center, params);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
            if best.is_none() {
                for (c, center) in centers.iter().enumerate() {
                    let d = distance_sq(grid, features, i, center, params);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((c, d));
                    }
                }
            }
            let (c, d) = best.expect("at least one center");
            (c as u32 + 1, d)
        })
        .collect()
}

fn objective(grid: &Grid, features: &[Vec<f64>], labels: &[u32], centers: &[Center], params: &SlicParams) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(i, &l)| distance_sq(grid, features, i, &centers[l as usize - 1], params))
        .sum()
}

fn update(grid: &Grid, features: &[Vec<f64>], labels: &[u32], centers: &mut [Center]) {
    let fresh = SuperpixelMap::from_labels(*grid, labels.to_vec(), features.to_vec());
    for (k, center) in centers.iter_mut().enumerate() {
        if k < fresh.counts.len() && fresh.counts[k] > 0 {
            *center = fresh.centers[k].clone();
        }
    }
}

/// Iterative SLIC assignment without connectivity enforcement.
///
/// Each pixel chooses among the centers whose `2S x 2S` window covers it and
/// its current center (lowest index on ties), falling back to all centers
/// when none qualifies, so the total distance never increases.
pub fn slic_assign(maps: &SpatialRaster, params: &SlicParams) -> Result<SlicRun> {
    params.validate()?;
    let grid = *maps.grid();
    let (features, mask) = standardize(maps);
    if !mask.iter().any(|&m| m) {
        return Err(Error::Precondition("every pixel of the coefficient maps is masked".into()));
    }
    let mut centers = initial_centers(&grid, &features, &mask, params.s);
    if centers.len() < 2 {
        return Err(Error::Precondition(format!(
            "a {}x{} grid with S = {} yields fewer than two SLIC centers",
            grid.nx(),
            grid.ny(),
            params.s
        )));
    }
    let mut labels = vec![0u32; grid.len()];
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assignment_centers = centers.clone();
    for _ in 0..params.n_iter {
        iterations += 1;
        let assigned = assign(&grid, &features, &mask, &centers, &labels, params);
        let new_labels: Vec<u32> = assigned.iter().map(|&(l, _)| l).collect();
        objective_trace.push(assigned.iter().map(|&(_, d)| d).sum());
        assignment_centers = centers.clone();
        let unchanged = new_labels == labels;
        labels = new_labels;
        if unchanged {
            converged = true;
            break;
        }
        update(&grid, &features, &labels, &mut centers);
        objective_trace.push(objective(&grid, &features, &labels, &centers, params));
    }
    Ok(SlicRun {
        grid,
        labels,
        centers: assignment_centers,
        objective: objective_trace,
        iterations,
        converged,
        features,
        params: *params,
    })
}

/// SLIC followed by connectivity enforcement.
pub fn slic(maps: &SpatialRaster, params: &SlicParams) -> Result<SuperpixelMap> {
    let run = slic_assign(maps, params)?;
    let raw = SuperpixelMap::from_labels(run.grid, compact(&run.labels), run.features);
    Ok(enforce_connectivity(&raw))
}

/// Renumbers labels `1..=m` in order of their smallest original id.
fn compact(labels: &[u32]) -> Vec<u32> {
    let max = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut used = vec![false; max + 1];
    for &l in labels {
        used[l as usize] = true;
    }
    let mut map = vec![0u32; max + 1];
    let mut next = 0;
    for l in 1..=max {
        if used[l] {
            next += 1;
            map[l] = next;
        }
    }
    labels.iter().map(|&l| map[l as usize]).collect()
}

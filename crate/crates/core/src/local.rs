//! Geographically weighted Poisson fits.
//!
//! At every evaluation-grid center `s` the quadrature likelihood is refitted
//! with each point's weight multiplied by a Gaussian kernel `w_h(u_k - s)`,
//! giving coefficient maps `theta_hat(s)`. Bandwidths are chosen by the
//! leave-one-out likelihood cross-validation criterion [`lcv`].

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Window};
use crate::glm::{
    build_quadrature_auto, fit_poisson_glm, Covariate, DesignMatrix, FitOptions, FitResult,
    GlmProblem, QuadratureScheme,
};
use crate::io;

pub const DEFAULT_EVAL_GRID: usize = 64;
pub const DEFAULT_LOCAL_DUMMY_GRID: usize = 64;
/// Kernel support radius in bandwidths.
pub const TRUNCATION: f64 = 4.0;
const MIN_LOCAL_WEIGHT: f64 = 1e-8;
const MAX_SKIPPED_FRACTION: f64 = 0.10;

/// Fixed-bandwidth Gaussian kernel truncated at `4h` and renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn radius(&self) -> f64 {
        TRUNCATION * self.bandwidth
    }

    /// `w_h` at squared distance `d2`.
    pub fn weight_sq(&self, d2: f64) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        if d2 > TRUNCATION * TRUNCATION * h2 {
            return 0.0;
        }
        let kept_mass = 1.0 - (-0.5 * TRUNCATION * TRUNCATION).exp();
        (-0.5 * d2 / h2).exp() / (2.0 * PI * h2 * kept_mass)
    }

    pub fn weight(&self, dx: f64, dy: f64) -> f64 {
        self.weight_sq(dx * dx + dy * dy)
    }
}

/// Eight log-spaced bandwidths from 5% to 50% of the shorter window side.
pub fn default_bandwidth_grid(window: &Window) -> Vec<f64> {
    let lo = 0.05 * window.shorter_side();
    let hi = 0.5 * window.shorter_side();
    (0..8)
        .map(|i| lo * (hi / lo).powf(i as f64 / 7.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub dummy_grid: usize,
    pub fit: FitOptions,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            dummy_grid: DEFAULT_LOCAL_DUMMY_GRID,
            fit: FitOptions::default(),
        }
    }
}

/// One band per model coefficient, on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMaps {
    pub maps: SpatialRaster,
    pub columns: Vec<String>,
    pub bandwidth: f64,
    /// Pixels left NaN because the local fit was not estimable.
    pub nan_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapsSidecar {
    bandwidth: f64,
    grid: Grid,
    columns: Vec<String>,
    files: Vec<String>,
    nan_pixels: usize,
}

impl CoefficientMaps {
    pub fn grid(&self) -> &Grid {
        self.maps.grid()
    }

    pub fn band_of(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    /// `exp(sum_j theta_j(u) Z_j(u))` on the map grid; covariates are looked
    /// up at pixel centers. Pixels with NaN coefficients stay NaN.
    pub fn intensity(&self, covariates: &[Covariate]) -> Result<SpatialRaster> {
        let grid = *self.grid();
        let design = eval_design(&grid, &self.columns, covariates)?;
        let p = self.columns.len();
        let values = (0..grid.len())
            .map(|i| {
                let eta: f64 = (0..p).map(|j| self.maps.band(j)[i] * design[i * p + j]).sum();
                eta.exp()
            })
            .collect();
        SpatialRaster::single(grid, values)
    }

    /// One raster text file per band plus `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (j, name) in self.columns.iter().enumerate() {
            let file = format!("{stem}_{}.txt", file_safe(name));
            io::write_raster_band(&dir.join(&file), &self.maps, j)?;
            files.push(file);
        }
        let sidecar = MapsSidecar {
            bandwidth: self.bandwidth,
            grid: *self.grid(),
            columns: self.columns.clone(),
            files,
            nan_pixels: self.nan_pixels,
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Reads maps written by [`CoefficientMaps::write`] from the sidecar path.
    pub fn read(sidecar: &Path) -> Result<Self> {
        let meta: MapsSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let dir = sidecar.parent().unwrap_or(Path::new("."));
        let mut bands = Vec::new();
        for file in &meta.files {
            let raster = io::read_raster(&dir.join(file))?;
            raster.grid().ensure_same(&meta.grid)?;
            bands.push(raster.into_bands().remove(0));
        }
        if bands.len() != meta.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} map files for {} columns",
                bands.len(),
                meta.columns.len()
            )));
        }
        Ok(Self {
            maps: SpatialRaster::new(meta.grid, bands)?,
            columns: meta.columns,
            bandwidth: meta.bandwidth,
            nan_pixels: meta.nan_pixels,
        })
    }
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Row-major design on the centers of `grid` (NaN where a covariate is masked).
fn eval_design(grid: &Grid, columns: &[String], covariates: &[Covariate]) -> Result<Vec<f64>> {
    if columns.len() != covariates.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} coefficient maps for {} covariates",
            columns.len(),
            covariates.len()
        )));
    }
    let mut out = Vec::with_capacity(grid.len() * columns.len());
    for [x, y] in grid.centers() {
        out.push(1.0);
        for c in covariates {
            out.push(c.value_at(x, y).unwrap_or(f64::NAN));
        }
    }
    Ok(out)
}

enum LocalOutcome {
    Fit(Vec<f64>),
    /// No data weight within the kernel support.
    Empty,
    Failed,
}

/// Quadrature, design and spatial index shared by all local fits of one pattern.
#[derive(Debug, Clone)]
pub struct LocalModel {
    quad: QuadratureScheme,
    design: DesignMatrix,
    covariates: Vec<Covariate>,
    /// Quadrature point indices per dummy-grid cell.
    buckets: Vec<Vec<usize>>,
    global: FitResult,
    options: LocalOptions,
}

impl LocalModel {
    pub fn new(pattern: &PointPattern, covariates: &[Covariate], options: LocalOptions) -> Result<Self> {
        let quad = build_quadrature_auto(pattern, options.dummy_grid)?;
        Self::with_quadrature(quad, covariates, options)
    }

    /// Uses a prepared quadrature, e.g. one restricted to a mask.
    pub fn with_quadrature(quad: QuadratureScheme, covariates: &[Covariate], options: LocalOptions) -> Result<Self> {
        let design = DesignMatrix::global(&quad, covariates)?;
        let global = fit_poisson_glm(&quad, &design)?;
        let mut buckets = vec![Vec::new(); quad.dummy_grid().len()];
        for k in 0..quad.len() {
            buckets[quad.cell(k)].push(k);
        }
        Ok(Self {
            quad,
            design,
            covariates: covariates.to_vec(),
            buckets,
            global,
            options,
        })
    }

    pub fn global_fit(&self) -> &FitResult {
        &self.global
    }

    pub fn columns(&self) -> &[String] {
        self.design.names()
    }

    pub fn quadrature(&self) -> &QuadratureScheme {
        &self.quad
    }

    fn neighbours(&self, s: [f64; 2], radius: f64) -> Vec<usize> {
        let grid = self.quad.dummy_grid();
        let w = grid.window();
        let col_range = |lo: f64, hi: f64| {
            let a = ((lo - w.xmin()) / grid.pixel_width()).floor().max(0.0) as usize;
            let b = (((hi - w.xmin()) / grid.pixel_width()).floor() as isize)
                .clamp(0, grid.nx() as isize - 1) as usize;
            (a.min(grid.nx() - 1), b)
        };
        let row_range = |lo: f64, hi: f64| {
            let a = ((lo - w.ymin()) / grid.pixel_height()).floor().max(0.0) as usize;
            let b = (((hi - w.ymin()) / grid.pixel_height()).floor() as isize)
                .clamp(0, grid.ny() as isize - 1) as usize;
            (a.min(grid.ny() - 1), b)
        };
        let (c0, c1) = col_range(s[0] - radius, s[0] + radius);
        let (r0, r1) = row_range(s[1] - radius, s[1] + radius);
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                out.extend_from_slice(&self.buckets[grid.index(col, row)]);
            }
        }
        out.sort_unstable();
        out
    }

    /// Kernel-weighted fit at `s`, optionally leaving data point `left_out` out.
    fn fit_at(&self, s: [f64; 2], kernel: &KernelSpec, left_out: Option<usize>) -> LocalOutcome {
        let p = self.design.n_cols();
        let rows = self.neighbours(s, kernel.radius());
        let left_dummy = left_out.and_then(|i| self.quad.cell_dummy(self.quad.cell(i)));
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut data_w = Vec::with_capacity(rows.len());
        let mut quad_w = Vec::with_capacity(rows.len());
        for &k in &rows {
            if Some(k) == left_out {
                continue;
            }
            let [ux, uy] = self.quad.points()[k];
            let w = kernel.weight(ux - s[0], uy - s[1]);
            if w == 0.0 {
                continue;
            }
            let mut a = self.quad.weights()[k];
            if Some(k) == left_dummy {
                a += self.quad.weights()[left_out.unwrap_or(k)];
            }
            x.extend_from_slice(self.design.row(k));
            data_w.push(if self.quad.is_data(k) { w } else { 0.0 });
            quad_w.push(a * w);
        }
        let total_data: f64 = data_w.iter().sum();
        if total_data < MIN_LOCAL_WEIGHT {
            return LocalOutcome::Empty;
        }
        let total_quad: f64 = quad_w.iter().sum();
        if p == 1 {
            // intercept-only: the weighted MLE is closed-form
            return LocalOutcome::Fit(vec![(total_data / total_quad).ln()]);
        }
        let problem = GlmProblem {
            x: &x,
            p,
            data_weights: &data_w,
            quad_weights: &quad_w,
        };
        match problem.irls(&self.global.coefficients, &self.options.fit) {
            Ok(out) if out.converged && out.coefficients.iter().all(|c| c.is_finite()) => {
                LocalOutcome::Fit(out.coefficients)
            }
            _ => LocalOutcome::Failed,
        }
    }

    /// Coefficient maps on the centers of `eval_grid`.
    pub fn maps(&self, kernel: &KernelSpec, eval_grid: &Grid) -> Result<CoefficientMaps> {
        let p = self.design.n_cols();
        let fits: Vec<Option<Vec<f64>>> = (0..eval_grid.len())
            .into_par_iter()
            .map(|i| match self.fit_at(eval_grid.center_of(i), kernel, None) {
                LocalOutcome::Fit(c) => Some(c),
                _ => None,
            })
            .collect();
        let mut bands = vec![vec![f64::NAN; eval_grid.len()]; p];
        let mut nan_pixels = 0;
        for (i, fit) in fits.into_iter().enumerate() {
            match fit {
                Some(c) => {
                    for j in 0..p {
                        bands[j][i] = c[j];
                    }
                }
                None => nan_pixels += 1,
            }
        }
        if nan_pixels > 0 {
            log::warn!(
                "{nan_pixels} of {} local fits at bandwidth {} were not estimable",
                eval_grid.len(),
                kernel.bandwidth()
            );
        }
        Ok(CoefficientMaps {
            maps: SpatialRaster::new(*eval_grid, bands)?,
            columns: self.design.names().to_vec(),
            bandwidth: kernel.bandwidth(),
            nan_pixels,
        })
    }

    /// Leave-one-out likelihood cross-validation score.
    pub fn lcv(&self, kernel: &KernelSpec, eval_grid: &Grid) -> Result<LcvValue> {
        let n = self.quad.n_data();
        let p = self.design.n_cols();
        if n < p + 2 {
            return Err(Error::Precondition(format!(
                "cross-validation needs at least {} points, got {n}",
                p + 2
            )));
        }
        let terms: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|i| match self.fit_at(self.quad.points()[i], kernel, Some(i)) {
                LocalOutcome::Fit(c) => {
                    Some(self.design.row(i).iter().zip(&c).map(|(a, b)| a * b).sum())
                }
                _ => None,
            })
            .collect();
        let skipped = terms.iter().filter(|t| t.is_none()).count();
        if skipped as f64 > MAX_SKIPPED_FRACTION * n as f64 {
            return Err(Error::NotConverged(format!(
                "{skipped} of {n} leave-one-out fits failed at bandwidth {}",
                kernel.bandwidth()
            )));
        }
        let log_terms: f64 = terms.iter().flatten().sum();
        let maps = self.maps(kernel, eval_grid)?;
        let intensity = maps.intensity(&self.covariates)?;
        // an inestimable pixel has no data weight: its intensity MLE is zero
        let integral: f64 = intensity
            .band(0)
            .iter()
            .filter(|v| v.is_finite())
            .sum::<f64>()
            * eval_grid.pixel_area();
        Ok(LcvValue {
            value: log_terms - integral,
            skipped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcvValue {
    pub value: f64,
    /// Leave-one-out terms dropped because the fit was not estimable.
    pub skipped: usize,
}

/// Coefficient maps of the kernel-weighted local likelihood.
pub fn fit_local(
    pattern: &PointPattern,
    covariates: &[Covariate],
    kernel: &KernelSpec,
    eval_grid: &Grid,
) -> Result<CoefficientMaps> {
    LocalModel::new(pattern, covariates, LocalOptions::default())?.maps(kernel, eval_grid)
}

pub fn lcv(
    pattern: &PointPattern,
    covariates: &[Covariate],
    kernel: &KernelSpec,
    eval_grid: &Grid,
) -> Result<LcvValue> {
    LocalModel::new(pattern, covariates, LocalOptions::default())?.lcv(kernel, eval_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub h_opt: f64,
    /// `(h, lcv)` per candidate; `None` where the criterion failed.
    pub curve: Vec<(f64, Option<f64>)>,
}

impl BandwidthSelection {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .curve
            .iter()
            .map(|(h, v)| vec![format!("{h}"), v.map_or("NA".into(), |v| format!("{v}"))])
            .collect();
        io::csv_table(&["h", "lcv"], &rows)
    }
}

/// Maximizes LCV over an ascending bandwidth grid; ties go to the larger bandwidth.
pub fn select_bandwidth_with(
    model: &LocalModel,
    h_grid: &[f64],
    eval_grid: &Grid,
) -> Result<BandwidthSelection> {
    if h_grid.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth grid".into()));
    }
    if h_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("bandwidth grid must be sorted ascending".into()));
    }
    let mut curve = Vec::with_capacity(h_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &h in h_grid {
        let value = match model.lcv(&KernelSpec::new(h)?, eval_grid) {
            Ok(v) => Some(v.value),
            Err(e @ Error::Precondition(_)) => return Err(e),
            Err(e) => {
                log::warn!("bandwidth {h}: {e}");
                None
            }
        };
        if let Some(v) = value {
            if best.is_none_or(|(_, b)| v >= b) {
                best = Some((h, v));
            }
        }
        curve.push((h, value));
    }
    let (h_opt, _) = best.ok_or_else(|| Error::Failed("LCV failed at every candidate bandwidth".into()))?;
    Ok(BandwidthSelection { h_opt, curve })
}

pub fn select_bandwidth(
    pattern: &PointPattern,
    covariates: &[Covariate],
    h_grid: &[f64],
    eval_grid: &Grid,
) -> Result<BandwidthSelection> {
    let model = LocalModel::new(pattern, covariates, LocalOptions::default())?;
    select_bandwidth_with(&model, h_grid, eval_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> PointPattern {
        let mut r = rng::stream(seed, 0, Purpose::Generic);
        let pts = (0..n).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
        PointPattern::new(pts, Window::unit_square()).unwrap()
    }

    #[test]
    fn kernel_integrates_to_one() {
        for h in [0.02, 0.05, 0.1] {
            let k = KernelSpec::new(h).unwrap();
            let n = 1200;
            let half = 5.0 * h;
            let step = 2.0 * half / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = -half + (i as f64 + 0.5) * step;
                    let y = -half + (j as f64 + 0.5) * step;
                    total += k.weight(x, y);
                }
            }
            total *= step * step;
            assert!((total - 1.0).abs() < 1e-6, "h = {h}: {total}");
        }
        assert!(KernelSpec::new(0.0).is_err());
    }

    #[test]
    fn default_grid_endpoints() {
        let g = default_bandwidth_grid(&Window::new(0.0, 2.0, 0.0, 1.0).unwrap());
        assert_eq!(g.len(), 8);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[7] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn huge_bandwidth_recovers_global_fit() {
        let pattern = uniform(100, 1);
        let grid = Grid::new(16, 16, Window::unit_square()).unwrap();
        let maps = fit_local(&pattern, &[], &KernelSpec::new(10.0).unwrap(), &grid).unwrap();
        let target = 100f64.ln();
        for &v in maps.maps.band(0) {
            assert!((v - target).abs() < 1e-3, "{v} vs {target}");
        }
    }

    #[test]
    fn huge_bandwidth_with_covariate() {
        let pattern = uniform(200, 2);
        let g = Grid::new(32, 32, Window::unit_square()).unwrap();
        let z = Covariate::new("z", SpatialRaster::from_fn(g, |x, y| x - y));
        let model = LocalModel::new(&pattern, &[z], LocalOptions::default()).unwrap();
        let eval = Grid::new(8, 8, Window::unit_square()).unwrap();
        let maps = model.maps(&KernelSpec::new(10.0).unwrap(), &eval).unwrap();
        for j in 0..2 {
            for &v in maps.maps.band(j) {
                assert!((v - model.global_fit().coefficients[j]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn sparse_region_gives_nan_everywhere_in_band() {
        let pattern = PointPattern::new(
            vec![[0.05, 0.05], [0.06, 0.05], [0.05, 0.07], [0.07, 0.07]],
            Window::unit_square(),
        )
        .unwrap();
        let eval = Grid::new(8, 8, Window::unit_square()).unwrap();
        let maps = fit_local(&pattern, &[], &KernelSpec::new(0.02).unwrap(), &eval).unwrap();
        assert!(maps.nan_pixels > 0);
        assert!(maps.maps.band(0)[0].is_finite());
        assert!(maps.maps.band(0)[eval.len() - 1].is_nan());
    }

    #[test]
    fn lcv_precondition_and_determinism() {
        let eval = Grid::new(8, 8, Window::unit_square()).unwrap();
        let k = KernelSpec::new(0.2).unwrap();
        let tiny = uniform(2, 3);
        let g = Grid::new(8, 8, Window::unit_square()).unwrap();
        let z = Covariate::new("z", SpatialRaster::from_fn(g, |x, _| x));
        assert!(matches!(lcv(&tiny, &[z], &k, &eval), Err(Error::Precondition(_))));
        let p = uniform(80, 4);
        let a = lcv(&p, &[], &k, &eval).unwrap();
        let b = lcv(&p, &[], &k, &eval).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn bandwidth_ties_prefer_larger() {
        let p = uniform(60, 5);
        let eval = Grid::new(8, 8, Window::unit_square()).unwrap();
        let sel = select_bandwidth(&p, &[], &[0.3, 0.3], &eval).unwrap();
        assert_eq!(sel.h_opt, 0.3);
        assert_eq!(sel.curve.len(), 2);
        let single = select_bandwidth(&p, &[], &[0.25], &eval).unwrap();
        assert_eq!(single.h_opt, 0.25);
        assert!(select_bandwidth(&p, &[], &[], &eval).is_err());
        assert!(select_bandwidth(&p, &[], &[0.3, 0.1], &eval).is_err());
    }

    #[test]
    fn maps_round_trip_through_files() {
        let p = uniform(50, 6);
        let eval = Grid::new(6, 5, Window::unit_square()).unwrap();
        let maps = fit_local(&p, &[], &KernelSpec::new(0.3).unwrap(), &eval).unwrap();
        let dir = tempfile::tempdir().unwrap();
        maps.write(dir.path(), "coef").unwrap();
        let back = CoefficientMaps::read(&dir.path().join("coef.json")).unwrap();
        assert_eq!(back, maps);
    }
}

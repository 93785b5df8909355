//! Berman-Turner quadrature and weighted Poisson likelihood maximization.
//!
//! A quadrature scheme holds the `n` data points followed by one dummy point
//! per cell of a regular grid. With counting weights every point in a cell
//! gets `a_k = cell_area / points_in_cell`, and the point-process
//! log-likelihood becomes the weighted Poisson regression objective
//!
//! ```text
//! sum_k a_k (y_k eta_k - exp(eta_k)) + sum_k a_k,   y_k = e_k / a_k
//! ```
//!
//! which [`fit_poisson_glm`] maximizes by IRLS (Newton with step halving).
//! The same engine accepts extra per-point multiplicative weights, which is
//! how kernel-weighted local likelihoods are fitted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Window};

pub const INTERCEPT: &str = "Intercept";
pub const DEFAULT_DUMMY_GRID: usize = 32;
/// The automatic dummy grid is doubled while a cell holds more data points.
pub const MAX_POINTS_PER_CELL: usize = 20;
/// Refinement stops once the grid would exceed this many cells per side.
pub const MAX_AUTO_DUMMY_GRID: usize = 256;

/// Data plus dummy points with cubature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureScheme {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    n_data: usize,
    grid: Grid,
    /// Dummy-grid cell of every point.
    cells: Vec<usize>,
    /// Index of the dummy point of each cell, if it was kept.
    cell_dummy: Vec<Option<usize>>,
}

impl QuadratureScheme {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn n_data(&self) -> usize {
        self.n_data
    }
    pub fn n_dummy(&self) -> usize {
        self.points.len() - self.n_data
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn is_data(&self, k: usize) -> bool {
        k < self.n_data
    }
    pub fn window(&self) -> &Window {
        self.grid.window()
    }
    pub fn dummy_grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cell(&self, k: usize) -> usize {
        self.cells[k]
    }
    pub fn cell_dummy(&self, cell: usize) -> Option<usize> {
        self.cell_dummy[cell]
    }
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Responses `y_k = e_k / a_k`.
    pub fn responses(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| if self.is_data(k) { 1.0 / self.weights[k] } else { 0.0 })
            .collect()
    }

    /// Drops dummy points (and their cells) for which `keep` is false; a data
    /// point failing `keep` is an error.
    pub fn restrict(&self, keep: impl Fn(f64, f64) -> bool) -> Result<QuadratureScheme> {
        let grid = self.grid;
        let mut cell_keep = vec![true; grid.len()];
        for (k, &[x, y]) in self.points.iter().enumerate() {
            if !keep(x, y) {
                if self.is_data(k) {
                    return Err(Error::Precondition(format!(
                        "data point ({x}, {y}) lies in the masked part of the window"
                    )));
                }
                cell_keep[self.cells[k]] = false;
            }
        }
        if let Some(k) = (0..self.n_data).find(|&k| !cell_keep[self.cells[k]]) {
            let [x, y] = self.points[k];
            return Err(Error::Precondition(format!(
                "data point ({x}, {y}) lies in a cell whose dummy point is masked"
            )));
        }
        let mut out = self.clone();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut cells = Vec::new();
        let mut cell_dummy = vec![None; grid.len()];
        for k in 0..self.len() {
            let c = self.cells[k];
            if self.is_data(k) || cell_keep[c] {
                if !self.is_data(k) {
                    cell_dummy[c] = Some(points.len());
                }
                points.push(self.points[k]);
                weights.push(self.weights[k]);
                cells.push(c);
            } else {
                // masked cell without data: the dummy carries the full cell area
                debug_assert!(self.cell_dummy[c] == Some(k));
            }
        }
        out.points = points;
        out.weights = weights;
        out.cells = cells;
        out.cell_dummy = cell_dummy;
        Ok(out)
    }

    pub fn summary(&self) -> QuadratureSummary {
        QuadratureSummary {
            n_data: self.n_data,
            n_dummy: self.n_dummy(),
            dummy_grid: [self.grid.nx(), self.grid.ny()],
            total_weight: self.total_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSummary {
    pub n_data: usize,
    pub n_dummy: usize,
    pub dummy_grid: [usize; 2],
    pub total_weight: f64,
}

/// Dummy points at the cell centers of an `nx * ny` grid with counting weights.
pub fn build_quadrature(pattern: &PointPattern, nx: usize, ny: usize) -> Result<QuadratureScheme> {
    let grid = Grid::new(nx, ny, *pattern.window())?;
    let mut per_cell = vec![1usize; grid.len()]; // the dummy itself
    let mut cells = Vec::with_capacity(pattern.len() + grid.len());
    for &[x, y] in pattern.points() {
        let c = grid.index_of(x, y)?;
        per_cell[c] += 1;
        cells.push(c);
    }
    let cell_area = grid.pixel_area();
    let mut points = pattern.points().to_vec();
    let mut weights: Vec<f64> = cells.iter().map(|&c| cell_area / per_cell[c] as f64).collect();
    let mut cell_dummy = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        cell_dummy.push(Some(points.len()));
        points.push(grid.center_of(c));
        weights.push(cell_area / per_cell[c] as f64);
        cells.push(c);
    }
    Ok(QuadratureScheme {
        points,
        weights,
        n_data: pattern.len(),
        grid,
        cells,
        cell_dummy,
    })
}

/// Starts from a `base * base` dummy grid and doubles it while any cell holds
/// more than [`MAX_POINTS_PER_CELL`] data points, up to [`MAX_AUTO_DUMMY_GRID`].
pub fn build_quadrature_auto(pattern: &PointPattern, base: usize) -> Result<QuadratureScheme> {
    let mut n = base.max(1);
    loop {
        let quad = build_quadrature(pattern, n, n)?;
        let max_in_cell = quad.weights[..quad.n_data]
            .iter()
            .map(|&a| (quad.grid.pixel_area() / a).round() as usize - 1)
            .max()
            .unwrap_or(0);
        if max_in_cell <= MAX_POINTS_PER_CELL || 2 * n > MAX_AUTO_DUMMY_GRID {
            return Ok(quad);
        }
        n *= 2;
    }
}

/// Named covariate raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub raster: SpatialRaster,
}

impl Covariate {
    pub fn new(name: impl Into<String>, raster: SpatialRaster) -> Self {
        Self {
            name: name.into(),
            raster,
        }
    }

    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        self.raster.value_at(x, y, 0)
    }
}

/// Row-major design aligned with a quadrature scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, values: Vec<f64>, n_rows: usize) -> Result<Self> {
        let p = names.len();
        if values.len() != p * n_rows {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {n_rows}x{p} design",
                values.len()
            )));
        }
        for (j, name) in names.iter().enumerate() {
            if names[..j].contains(name) {
                return Err(Error::InvalidArgument(format!("duplicate design column `{name}`")));
            }
        }
        let intercept = names.iter().position(|n| n == INTERCEPT).ok_or_else(|| {
            Error::InvalidArgument(format!("design has no `{INTERCEPT}` column"))
        })?;
        if (0..n_rows).any(|i| values[i * p + intercept] != 1.0) {
            return Err(Error::InvalidArgument("intercept column must be all ones".into()));
        }
        for (j, name) in names.iter().enumerate() {
            if (0..n_rows).all(|i| values[i * p + j] == 0.0) {
                return Err(Error::ZeroColumn(name.clone()));
            }
        }
        Ok(Self {
            names,
            values,
            n_rows,
        })
    }

    /// Intercept plus one column per covariate.
    pub fn global(quad: &QuadratureScheme, covariates: &[Covariate]) -> Result<Self> {
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(covariates.iter().map(|c| c.name.clone()));
        let mut values = Vec::with_capacity(quad.len() * names.len());
        for &[x, y] in quad.points() {
            values.push(1.0);
            for c in covariates {
                values.push(c.value_at(x, y)?);
            }
        }
        Self::new(names, values, quad.len())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.values[i * self.n_cols() + j]).collect()
    }
    pub fn intercept_index(&self) -> usize {
        self.names.iter().position(|n| n == INTERCEPT).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative deviance change that counts as converged.
    pub tolerance: f64,
    pub collinearity_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
            collinearity_tolerance: 1e-10,
        }
    }
}

/// Weighted Poisson problem `max sum_k d_k eta_k - v_k exp(eta_k)`.
///
/// `data_weights[k]` is `v_k y_k` (the kernel weight of a data point, zero
/// for dummies) and `quad_weights[k]` is `v_k` (cubature weight times any
/// extra point weight).
#[derive(Debug, Clone, Copy)]
pub struct GlmProblem<'a> {
    pub x: &'a [f64],
    pub p: usize,
    pub data_weights: &'a [f64],
    pub quad_weights: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct IrlsOutcome {
    pub coefficients: Vec<f64>,
    /// Fisher information at the returned coefficients.
    pub information: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sum d_k eta_k - v_k mu_k`.
    pub objective: f64,
}

impl GlmProblem<'_> {
    pub fn n_rows(&self) -> usize {
        self.quad_weights.len()
    }

    fn eta(&self, k: usize, beta: &[f64]) -> f64 {
        let row = &self.x[k * self.p..(k + 1) * self.p];
        row.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        (0..self.n_rows())
            .map(|k| {
                let eta = self.eta(k, beta);
                let d = self.data_weights[k];
                let lin = if d != 0.0 { d * eta } else { 0.0 };
                lin - self.quad_weights[k] * eta.exp()
            })
            .sum()
    }

    /// Poisson deviance up to nothing: zero at a saturated fit.
    fn deviance(&self, beta: &[f64]) -> f64 {
        let mut dev = 0.0;
        for k in 0..self.n_rows() {
            let v = self.quad_weights[k];
            if v == 0.0 {
                continue;
            }
            let eta = self.eta(k, beta);
            let mu = eta.exp();
            let d = self.data_weights[k];
            if d > 0.0 {
                dev += d * ((d / v).ln() - eta) - d + v * mu;
            } else {
                dev += v * mu;
            }
        }
        2.0 * dev
    }

    /// Gradient of the objective.
    pub fn score(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for k in 0..self.n_rows() {
            let resid = self.data_weights[k] - self.quad_weights[k] * self.eta(k, beta).exp();
            let row = &self.x[k * self.p..(k + 1) * self.p];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += resid * xj;
            }
        }
        g
    }

    fn information_and_score(&self, beta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.p;
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut score = DVector::<f64>::zeros(p);
        for k in 0..self.n_rows() {
            let v = self.quad_weights[k];
            if v == 0.0 && self.data_weights[k] == 0.0 {
                continue;
            }
            let row = &self.x[k * p..(k + 1) * p];
            let w = v * self.eta(k, beta).exp();
            let resid = self.data_weights[k] - w;
            for a in 0..p {
                score[a] += resid * row[a];
                let wa = w * row[a];
                for b in 0..=a {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        (info, score)
    }

    /// Names of columns that are linearly dependent on earlier-pivoted ones,
    /// by column-pivoted Gram-Schmidt on `sqrt(v) X`.
    pub fn collinear_columns(&self, tolerance: f64) -> Vec<usize> {
        let p = self.p;
        let n = self.n_rows();
        let mut cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                (0..n)
                    .map(|k| self.quad_weights[k].sqrt() * self.x[k * p + j])
                    .collect()
            })
            .collect();
        let norm = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let original: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
        let mut remaining: Vec<usize> = (0..p).collect();
        let mut dependent = Vec::new();
        while !remaining.is_empty() {
            // pick the column with the largest relative residual norm
            let (pos, rel) = remaining
                .iter()
                .enumerate()
                .map(|(pos, &j)| {
                    let r = if original[j] > 0.0 { norm(&cols[j]) / original[j] } else { 0.0 };
                    (pos, r)
                })
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if rel < tolerance {
                dependent.extend(remaining.iter().copied());
                break;
            }
            let j = remaining.remove(pos);
            let nj = norm(&cols[j]);
            let q: Vec<f64> = cols[j].iter().map(|v| v / nj).collect();
            for &other in &remaining {
                let dot: f64 = q.iter().zip(&cols[other]).map(|(a, b)| a * b).sum();
                for (c, qv) in cols[other].iter_mut().zip(&q) {
                    *c -= dot * qv;
                }
            }
        }
        dependent.sort_unstable();
        dependent
    }

    /// Newton-Raphson (IRLS) with step halving.
    pub fn irls(&self, start: &[f64], options: &FitOptions) -> Result<IrlsOutcome> {
        let mut beta = start.to_vec();
        let mut dev = self.deviance(&beta);
        if !dev.is_finite() {
            return Err(Error::InvalidArgument("non-finite deviance at the starting values".into()));
        }
        let mut converged = false;
        let mut iterations = 0;
        while iterations < options.max_iter {
            iterations += 1;
            let (info, score) = self.information_and_score(&beta);
            let step = match info.cholesky() {
                Some(chol) => chol.solve(&score),
                None => {
                    return Err(Error::NotConverged(
                        "Fisher information is not positive definite".into(),
                    ))
                }
            };
            let mut scale = 1.0;
            let mut candidate: Vec<f64>;
            let mut new_dev;
            let mut halvings = 0;
            loop {
                candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                new_dev = self.deviance(&candidate);
                if new_dev.is_finite() && new_dev <= dev + 1e-12 * dev.abs().max(1.0) {
                    break;
                }
                halvings += 1;
                if halvings > 30 {
                    break;
                }
                scale *= 0.5;
            }
            if !new_dev.is_finite() || halvings > 30 {
                // no improving step along the Newton direction
                converged = (dev - new_dev).abs() <= options.tolerance * (dev.abs() + 0.1);
                break;
            }
            let change = (dev - new_dev).abs();
            beta = candidate;
            dev = new_dev;
            if change <= options.tolerance * (dev.abs() + 0.1) {
                converged = true;
                break;
            }
        }
        let (information, _) = self.information_and_score(&beta);
        Ok(IrlsOutcome {
            objective: self.objective(&beta),
            coefficients: beta,
            information,
            iterations,
            converged,
        })
    }
}

/// Coefficients, covariance and quadrature log-likelihood of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub n_parameters: usize,
    pub converged: bool,
    pub iterations: usize,
    pub quadrature: QuadratureSummary,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|j| self.coefficients[j])
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.n_parameters).map(|j| self.covariance[j][j].max(0.0).sqrt()).collect()
    }

    pub fn aic(&self) -> f64 {
        aic(self)
    }
}

/// `2 k - 2 loglik`.
pub fn aic(fit: &FitResult) -> f64 {
    2.0 * fit.n_parameters as f64 - 2.0 * fit.loglik
}

pub fn fit_poisson_glm(quad: &QuadratureScheme, design: &DesignMatrix) -> Result<FitResult> {
    fit_poisson_glm_with(quad, design, None, &FitOptions::default())
}

/// Fits the quadrature Poisson model, optionally multiplying every point's
/// weight by `point_weights[k]`.
pub fn fit_poisson_glm_with(
    quad: &QuadratureScheme,
    design: &DesignMatrix,
    point_weights: Option<&[f64]>,
    options: &FitOptions,
) -> Result<FitResult> {
    if design.n_rows() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but the quadrature scheme has {} points",
            design.n_rows(),
            quad.len()
        )));
    }
    let extra = |k: usize| point_weights.map_or(1.0, |w| w[k]);
    let quad_weights: Vec<f64> = (0..quad.len()).map(|k| quad.weights()[k] * extra(k)).collect();
    let data_weights: Vec<f64> = (0..quad.len())
        .map(|k| if quad.is_data(k) { extra(k) } else { 0.0 })
        .collect();
    let problem = GlmProblem {
        x: design.values(),
        p: design.n_cols(),
        data_weights: &data_weights,
        quad_weights: &quad_weights,
    };
    let dependent = problem.collinear_columns(options.collinearity_tolerance);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent.iter().map(|&j| design.names()[j].clone()).collect(),
        });
    }
    let mut start = vec![0.0; design.n_cols()];
    let total_data: f64 = data_weights.iter().sum();
    let total_quad: f64 = quad_weights.iter().sum();
    start[design.intercept_index()] = (total_data.max(0.5) / total_quad).ln();

    let outcome = problem.irls(&start, options)?;
    let covariance = invert_information(&outcome.information)?;
    // sum_k e_k log(lambda_k) + (1 - lambda_k) a_k
    let loglik = outcome.objective + total_quad;
    let n_parameters = design.n_cols();
    let mut fit = FitResult {
        columns: design.names().to_vec(),
        coefficients: outcome.coefficients,
        covariance,
        loglik,
        aic: 0.0,
        n_parameters,
        converged: outcome.converged,
        iterations: outcome.iterations,
        quadrature: quad.summary(),
    };
    fit.aic = aic(&fit);
    if !fit.converged {
        log::warn!("IRLS did not converge after {} iterations", fit.iterations);
    }
    Ok(fit)
}

fn invert_information(info: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let inv = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.clone().try_inverse())
        .ok_or_else(|| Error::NotConverged("singular Fisher information".into()))?;
    let p = inv.nrows();
    Ok((0..p)
        .map(|a| (0..p).map(|b| 0.5 * (inv[(a, b)] + inv[(b, a)])).collect())
        .collect())
}

/// One row of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub z: f64,
    pub p_value: f64,
    pub significance: &'static str,
    /// Set when the standard error is zero and `z` is a signed infinity.
    pub degenerate_se: bool,
}

pub fn coef_table(fit: &FitResult, level: f64) -> Result<Vec<CoefRow>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    if !fit.converged {
        return Err(Error::NotConverged("coefficient table requires a converged fit".into()));
    }
    let normal = Normal::standard();
    let quantile = normal.inverse_cdf(0.5 + level / 2.0);
    Ok(fit
        .columns
        .iter()
        .zip(&fit.coefficients)
        .zip(fit.standard_errors())
        .map(|((name, &estimate), se)| {
            let degenerate_se = se == 0.0;
            let z = if degenerate_se {
                if estimate == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(estimate)
                }
            } else {
                estimate / se
            };
            let p_value = 2.0 * normal.sf(z.abs());
            let significance = match p_value {
                p if p < 0.001 => "***",
                p if p < 0.01 => "**",
                p if p < 0.05 => "*",
                _ => "",
            };
            CoefRow {
                name: name.clone(),
                estimate,
                se,
                ci_lo: estimate - quantile * se,
                ci_hi: estimate + quantile * se,
                z,
                p_value,
                significance,
                degenerate_se,
            }
        })
        .collect())
}

pub fn coef_table_csv(rows: &[CoefRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                format!("{}", r.estimate),
                format!("{}", r.se),
                format!("{}", r.ci_lo),
                format!("{}", r.ci_hi),
                format!("{}", r.z),
                format!("{}", r.p_value),
                r.significance.to_string(),
            ]
        })
        .collect();
    crate::io::csv_table(
        &["name", "estimate", "se", "ci_lo", "ci_hi", "z", "p_value", "signif"],
        &body,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood ratio test of `null` nested in `alt` (nesting checked by column name).
pub fn lrt(null: &FitResult, alt: &FitResult) -> Result<LrtResult> {
    if let Some(missing) = null.columns.iter().find(|c| !alt.columns.contains(c)) {
        return Err(Error::NotNested(missing.clone()));
    }
    let df = alt.n_parameters - null.n_parameters;
    let statistic = (2.0 * (alt.loglik - null.loglik)).max(0.0);
    let p_value = if df == 0 || statistic == 0.0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| Error::InvalidArgument(format!("chi-square with {df} df: {e}")))?
            .sf(statistic)
    };
    Ok(LrtResult {
        statistic,
        df,
        p_value,
    })
}

//! Covariate fields and inhomogeneous Poisson patterns for the three
//! two-tile scenario families.
//!
//! All scenarios split the window by the diagonal rule `x > y` (tile 1,
//! where `W(u) = 1`) versus `x <= y` (tile 2, the reference tile).

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Tessellation, Window};
use crate::rng::{self, Purpose};

pub const DEFAULT_SIM_GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `exp{b0 + g0 W}`: region-wise constant intensity.
    ConstantTiles,
    /// `exp{b0 + b1 Z + g1 Z W}`: region-wise covariate effect.
    CovariateEffect,
    /// `exp{b0 + b1 Z + g0 W + g1 Z W}`: every parameter changes.
    FullEmbedded,
}

impl Scenario {
    pub fn has_covariate(self) -> bool {
        !matches!(self, Scenario::ConstantTiles)
    }

    /// Parameter names in reporting order.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Scenario::ConstantTiles => &["beta0", "gamma0"],
            Scenario::CovariateEffect => &["beta0", "beta1", "gamma1"],
            Scenario::FullEmbedded => &["beta0", "beta1", "gamma0", "gamma1"],
        }
    }
}

/// How the tile parameters enter the intensity.
///
/// `Additive` reads the formulas literally: tile 1 adds `gamma` to the
/// reference-tile `beta`. `Levels` makes `gamma` the tile-1 value itself
/// (log-intensity intercept or slope inside `x > y`), which is the
/// convention under which the tabulated expected counts hold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    #[default]
    Levels,
    Additive,
}

/// Intercept and slope of the log-intensity inside one tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileCoefficients {
    pub intercept: f64,
    pub slope: f64,
}

/// Scenario parameters; absent ones are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub beta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
}

impl Parameters {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "beta0" => Some(self.beta0),
            "beta1" => self.beta1,
            "gamma0" => self.gamma0,
            "gamma1" => self.gamma1,
            _ => None,
        }
    }

    pub fn validate(&self, scenario: Scenario) -> Result<()> {
        let names = scenario.parameter_names();
        for name in ["beta1", "gamma0", "gamma1"] {
            let present = self.get(name).is_some();
            let wanted = names.contains(&name);
            if present != wanted {
                return Err(Error::InvalidArgument(format!(
                    "scenario {scenario:?} {} `{name}`",
                    if wanted { "requires" } else { "does not use" }
                )));
            }
        }
        if !names.iter().all(|n| self.get(n).is_some_and(f64::is_finite)) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(())
    }

    /// Coefficients of the reference tile (`x <= y`) and of tile 1 (`x > y`).
    pub fn tiles(&self, scenario: Scenario, coding: Coding) -> [TileCoefficients; 2] {
        let b0 = self.beta0;
        let b1 = self.beta1.unwrap_or(0.0);
        let g0 = self.gamma0.unwrap_or(0.0);
        let g1 = self.gamma1.unwrap_or(0.0);
        let base = TileCoefficients {
            intercept: b0,
            slope: b1,
        };
        let other = match (coding, scenario) {
            (Coding::Additive, _) => TileCoefficients {
                intercept: b0 + g0,
                slope: b1 + g1,
            },
            (Coding::Levels, Scenario::ConstantTiles) => TileCoefficients {
                intercept: g0,
                slope: 0.0,
            },
            (Coding::Levels, Scenario::CovariateEffect) => TileCoefficients {
                intercept: b0,
                slope: g1,
            },
            (Coding::Levels, Scenario::FullEmbedded) => TileCoefficients {
                intercept: g0,
                slope: g1,
            },
        };
        [base, other]
    }

    /// Inverse of [`Parameters::tiles`].
    pub fn from_tiles(scenario: Scenario, coding: Coding, tiles: [TileCoefficients; 2]) -> Self {
        let [base, other] = tiles;
        let (g0, g1) = match coding {
            Coding::Additive => (other.intercept - base.intercept, other.slope - base.slope),
            Coding::Levels => (other.intercept, other.slope),
        };
        match scenario {
            Scenario::ConstantTiles => Self {
                beta0: base.intercept,
                gamma0: Some(g0),
                ..Self::default()
            },
            Scenario::CovariateEffect => Self {
                beta0: base.intercept,
                beta1: Some(base.slope),
                gamma1: Some(g1),
                ..Self::default()
            },
            Scenario::FullEmbedded => Self {
                beta0: base.intercept,
                beta1: Some(base.slope),
                gamma0: Some(g0),
                gamma1: Some(g1),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrfParams {
    #[serde(default = "default_variance")]
    pub variance: f64,
    /// Exponential covariance range; `None` means a tenth of the shorter window side.
    #[serde(default)]
    pub range: Option<f64>,
}

fn default_variance() -> f64 {
    1.0
}

impl Default for GrfParams {
    fn default() -> Self {
        Self {
            variance: 1.0,
            range: None,
        }
    }
}

impl GrfParams {
    pub fn range_for(&self, window: &Window) -> f64 {
        self.range.unwrap_or(0.1 * window.shorter_side())
    }
}

/// `n` or `[nx, ny]` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSize {
    Square(usize),
    Rect([usize; 2]),
}

impl GridSize {
    pub fn dims(self) -> (usize, usize) {
        match self {
            GridSize::Square(n) => (n, n),
            GridSize::Rect([nx, ny]) => (nx, ny),
        }
    }
}

impl Default for GridSize {
    fn default() -> Self {
        GridSize::Square(DEFAULT_SIM_GRID)
    }
}

fn unit_window() -> Window {
    Window::unit_square()
}

/// JSON-serializable description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    #[serde(default)]
    pub coding: Coding,
    pub beta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    /// Nominal expected count; informational, the realized integral is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_n: Option<f64>,
    #[serde(default)]
    pub grid: GridSize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grf: GrfParams,
    #[serde(default = "unit_window")]
    pub window: Window,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, params: Parameters) -> Self {
        Self {
            scenario,
            coding: Coding::default(),
            beta0: params.beta0,
            beta1: params.beta1,
            gamma0: params.gamma0,
            gamma1: params.gamma1,
            expected_n: None,
            grid: GridSize::default(),
            seed: 0,
            grf: GrfParams::default(),
            window: Window::unit_square(),
        }
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            beta0: self.beta0,
            beta1: self.beta1,
            gamma0: self.gamma0,
            gamma1: self.gamma1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.parameters().validate(self.scenario)?;
        if let Some(n) = self.expected_n {
            if !(n > 0.0) {
                return Err(Error::InvalidArgument(format!("expected_n must be positive, got {n}")));
            }
        }
        let (nx, ny) = self.grid.dims();
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument("simulation grid must be at least 2x2".into()));
        }
        if !(self.grf.variance > 0.0) || !(self.grf.range_for(&self.window) > 0.0) {
            return Err(Error::InvalidArgument("GRF variance and range must be positive".into()));
        }
        Ok(())
    }

    pub fn sim_grid(&self) -> Result<Grid> {
        let (nx, ny) = self.grid.dims();
        Grid::new(nx, ny, self.window)
    }

    /// Covariate, tessellation and intensity of replicate `replicate`.
    pub fn realize(&self, replicate: u64) -> Result<Realization> {
        self.validate()?;
        let grid = self.sim_grid()?;
        let tessellation = Tessellation::diagonal(grid);
        let covariate = if self.scenario.has_covariate() {
            let mut rng = rng::stream(self.seed, replicate, Purpose::Covariate);
            Some(simulate_grf_with(
                &grid,
                self.grf.variance,
                self.grf.range_for(&self.window),
                &mut rng,
            )?)
        } else {
            None
        };
        let intensity = scenario_intensity(self, covariate.as_ref(), &tessellation)?;
        Ok(Realization {
            covariate,
            tessellation,
            intensity,
        })
    }

    /// Realization plus a simulated pattern, all from the replicate's streams.
    pub fn simulate(&self, replicate: u64) -> Result<(Realization, PointPattern)> {
        let realization = self.realize(replicate)?;
        let mut rng = rng::stream(self.seed, replicate, Purpose::Points);
        let pattern = simulate_poisson(&realization.intensity, &mut rng)?;
        Ok((realization, pattern))
    }
}

/// Everything fixed by (spec, replicate) before points are drawn.
#[derive(Debug, Clone)]
pub struct Realization {
    pub covariate: Option<SpatialRaster>,
    pub tessellation: Tessellation,
    pub intensity: IntensityField,
}

/// Non-negative intensity raster with a known upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    raster: SpatialRaster,
    max_value: f64,
}

impl IntensityField {
    pub fn new(raster: SpatialRaster) -> Result<Self> {
        let mut max_value = 0.0f64;
        for &v in raster.band(0) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "intensity values must be finite and non-negative, got {v}"
                )));
            }
            max_value = max_value.max(v);
        }
        Ok(Self { raster, max_value })
    }

    pub fn raster(&self) -> &SpatialRaster {
        &self.raster
    }
    pub fn max_value(&self) -> f64 {
        self.max_value
    }
    /// Expected count: Riemann sum of the piecewise-constant intensity.
    pub fn integral(&self) -> f64 {
        self.raster.integral(0)
    }
}

/// Pixelwise scenario intensity on the tessellation's grid.
pub fn scenario_intensity(
    spec: &ScenarioSpec,
    covariate: Option<&SpatialRaster>,
    tessellation: &Tessellation,
) -> Result<IntensityField> {
    spec.parameters().validate(spec.scenario)?;
    let grid = *tessellation.grid();
    if spec.scenario.has_covariate() {
        let z = covariate.ok_or_else(|| {
            Error::InvalidArgument(format!("scenario {:?} needs a covariate raster", spec.scenario))
        })?;
        grid.ensure_same(z.grid())?;
    }
    if tessellation.q() != 2 {
        return Err(Error::InvalidTessellation(format!(
            "scenario intensities need two tiles, got {}",
            tessellation.q()
        )));
    }
    let tiles = spec.parameters().tiles(spec.scenario, spec.coding);
    let reference = tessellation.reference_tile();
    let mut values = Vec::with_capacity(grid.len());
    for (i, &label) in tessellation.labels().iter().enumerate() {
        let tile = if label == reference { tiles[0] } else { tiles[1] };
        let z = match covariate {
            Some(r) if spec.scenario.has_covariate() => r.band(0)[i],
            _ => 0.0,
        };
        let eta = tile.intercept + tile.slope * z;
        let lambda = eta.exp();
        if !lambda.is_finite() {
            let (col, row) = grid.col_row(i);
            return Err(Error::IntensityOverflow {
                col,
                row,
                log_intensity: eta,
            });
        }
        values.push(lambda);
    }
    IntensityField::new(SpatialRaster::single(grid, values)?)
}

/// Lewis-Shedler thinning against the raster maximum.
pub fn simulate_poisson<R: Rng + ?Sized>(field: &IntensityField, rng: &mut R) -> Result<PointPattern> {
    let window = *field.raster().window();
    let max = field.max_value();
    if max <= 0.0 {
        return Ok(PointPattern::empty(window));
    }
    let mean = max * window.area();
    let n: f64 = Poisson::new(mean)
        .map_err(|e| Error::InvalidArgument(format!("dominating Poisson mean {mean}: {e}")))?
        .sample(rng);
    let mut points = Vec::new();
    for _ in 0..n as u64 {
        let x = window.xmin() + rng.random::<f64>() * window.width();
        let y = window.ymin() + rng.random::<f64>() * window.height();
        let accept: f64 = rng.random();
        if accept * max < field.raster().value_at(x, y, 0)? {
            points.push([x, y]);
        }
    }
    PointPattern::new(points, window)
}

pub fn simulate_poisson_seeded(field: &IntensityField, seed: u64) -> Result<PointPattern> {
    simulate_poisson(field, &mut rng::stream(seed, 0, Purpose::Points))
}

/// Zero-mean stationary Gaussian field with covariance
/// `variance * exp(-d / range)`, by circulant embedding on a padded torus.
pub fn simulate_grf(window: Window, nx: usize, ny: usize, variance: f64, range: f64, seed: u64) -> Result<SpatialRaster> {
    let grid = Grid::new(nx, ny, window)?;
    simulate_grf_with(&grid, variance, range, &mut rng::stream(seed, 0, Purpose::Covariate))
}

pub fn simulate_grf_with<R: Rng + ?Sized>(grid: &Grid, variance: f64, range: f64, rng: &mut R) -> Result<SpatialRaster> {
    if !(variance > 0.0) || !(range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "GRF variance ({variance}) and range ({range}) must be positive"
        )));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.pixel_width(), grid.pixel_height());
    let mut planner = FftPlanner::<f64>::new();

    // Doubled grid first, then pad further if the embedding is indefinite.
    for factor in [2usize, 4, 8] {
        let (mx, my) = (factor * nx, factor * ny);
        let mut spectrum: Vec<Complex<f64>> = (0..mx * my)
            .map(|k| {
                let (i, j) = (k % mx, k / mx);
                let ix = i.min(mx - i) as f64 * dx;
                let jy = j.min(my - j) as f64 * dy;
                let d = (ix * ix + jy * jy).sqrt();
                Complex::new(variance * (-d / range).exp(), 0.0)
            })
            .collect();
        fft2(&mut planner, &mut spectrum, mx, my);
        let max_eig = spectrum.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let min_eig = spectrum.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if min_eig < -1e-8 * max_eig {
            log::debug!("circulant embedding {mx}x{my} indefinite (min eigenvalue {min_eig}); padding");
            continue;
        }
        let scale = 1.0 / (mx * my) as f64;
        let mut noise: Vec<Complex<f64>> = spectrum
            .iter()
            .map(|eig| {
                let amp = (eig.re.max(0.0) * scale).sqrt();
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex::new(amp * re, amp * im)
            })
            .collect();
        fft2(&mut planner, &mut noise, mx, my);
        let values = (0..nx * ny)
            .map(|k| noise[(k / nx) * mx + k % nx].re)
            .collect();
        return SpatialRaster::single(*grid, values);
    }
    Err(Error::EmbeddingFailed { size: 8 * nx.max(ny) })
}

/// In-place 2-D forward FFT of a row-major `mx * my` array.
fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex<f64>], mx: usize, my: usize) {
    let row_fft = planner.plan_fft_forward(mx);
    for row in data.chunks_mut(mx) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(my);
    let mut column = vec![Complex::new(0.0, 0.0); my];
    for i in 0..mx {
        for j in 0..my {
            column[j] = data[j * mx + i];
        }
        col_fft.process(&mut column);
        for j in 0..my {
            data[j * mx + i] = column[j];
        }
    }
}

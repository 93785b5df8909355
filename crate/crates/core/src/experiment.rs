//! Monte Carlo experiment harness.
//!
//! An experiment simulates `replicates` patterns for every parameter row of
//! one scenario and runs up to three protocols on each pattern:
//!
//! * `identification`: local intercept maps, segmentation, and a check that
//!   exactly two tiles matching the true split were found;
//! * `estimation`: tessellated fit with the known tessellation and the
//!   replicate mean, sd and MSE of each parameter;
//! * `mise`: integrated squared error of the global, local and tessellated
//!   fitted intensities against the true one.
//!
//! Replicates run in parallel on per-replicate RNG streams and are reduced in
//! replicate order, so reports are byte-identical for a given config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::mise_true;
use crate::geometry::{Grid, PointPattern, SpatialRaster, Tessellation, Window};
use crate::glm::{Covariate, INTERCEPT};
use crate::local::{default_bandwidth_grid, select_bandwidth_with, KernelSpec, LocalModel, LocalOptions};
use crate::segmentation::{
    agreement, fill_unsupported, identify_tessellations, ClusterParams, SegmentationMode, SegmentationParams, SlicParams,
    IDENTIFICATION_AGREEMENT,
};
use crate::simulation::{
    Coding, GridSize, GrfParams, Parameters, Scenario, ScenarioSpec, TileCoefficients,
};
use crate::tessellated::{fit_tessellated, fitted_intensity, tile_coefficients, TessellatedSpec};

/// Name of the simulated covariate in fitted designs.
pub const COVARIATE_NAME: &str = "Z";
/// Share of failed replicates above which a run counts as failed.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
const PILOT_REPLICATE: u64 = u32::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Identification,
    Estimation,
    Mise,
}

/// Which tessellation the tessellated model uses in the MISE protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TessellationSource {
    #[default]
    Known,
    Identified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_n: Option<f64>,
    pub beta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
}

impl ParamRow {
    pub fn parameters(&self) -> Parameters {
        Parameters {
            beta0: self.beta0,
            beta1: self.beta1,
            gamma0: self.gamma0,
            gamma1: self.gamma1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "default_simulation")]
    pub simulation: usize,
    #[serde(default = "default_evaluation")]
    pub evaluation: usize,
    /// Dummy grid of global and tessellated fits; defaults to the simulation grid.
    #[serde(default)]
    pub dummy: Option<usize>,
    #[serde(default = "default_local_dummy")]
    pub local_dummy: usize,
}

fn default_simulation() -> usize {
    crate::simulation::DEFAULT_SIM_GRID
}
fn default_evaluation() -> usize {
    crate::local::DEFAULT_EVAL_GRID
}
fn default_local_dummy() -> usize {
    crate::local::DEFAULT_LOCAL_DUMMY_GRID
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            simulation: default_simulation(),
            evaluation: default_evaluation(),
            dummy: None,
            local_dummy: default_local_dummy(),
        }
    }
}

impl Grids {
    pub fn dummy(&self) -> usize {
        self.dummy.unwrap_or(self.simulation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LocalConfig {
    /// Fixed bandwidth; when absent it is chosen by LCV on a pilot pattern per row.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub h_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicConfig {
    #[serde(rename = "S", default)]
    pub s: Option<usize>,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_g() -> f64 {
    1.0
}
fn default_n_iter() -> usize {
    10
}
fn default_k_max() -> usize {
    crate::segmentation::cluster::DEFAULT_K_MAX
}
fn default_tau() -> f64 {
    crate::segmentation::cluster::DEFAULT_TAU
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            s: None,
            g: default_g(),
            n_iter: default_n_iter(),
            k_max: default_k_max(),
            tau: default_tau(),
        }
    }
}

impl SlicConfig {
    pub fn segmentation_params(&self) -> SegmentationParams {
        SegmentationParams {
            slic: self.s.map(|s| SlicParams {
                s,
                g: self.g,
                n_iter: self.n_iter,
            }),
            cluster: ClusterParams {
                k_max: self.k_max,
                tau: self.tau,
            },
        }
    }

    fn params_for(&self, pixels: usize) -> SegmentationParams {
        let mut p = self.segmentation_params();
        let mut slic = p.slic_for(pixels);
        slic.g = self.g;
        slic.n_iter = self.n_iter;
        p.slic = Some(slic);
        p
    }
}

fn all_protocols() -> Vec<Protocol> {
    vec![Protocol::Identification, Protocol::Estimation, Protocol::Mise]
}

fn unit_window() -> Window {
    Window::unit_square()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub scenario: Scenario,
    #[serde(default)]
    pub coding: Coding,
    pub params: Vec<ParamRow>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "all_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub local: LocalConfig,
    #[serde(default)]
    pub slic: SlicConfig,
    #[serde(default)]
    pub grf: GrfParams,
    #[serde(default = "unit_window")]
    pub window: Window,
    #[serde(default)]
    pub mise_tessellation: TessellationSource,
    /// Also write one line per replicate to `replicates.csv`.
    #[serde(default)]
    pub diagnostics: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.params.is_empty() {
            return bad("params must list at least one parameter row".into());
        }
        if self.protocols.is_empty() {
            return bad("protocols must not be empty".into());
        }
        for (i, row) in self.params.iter().enumerate() {
            self.scenario_spec(row)
                .validate()
                .map_err(|e| Error::InvalidArgument(format!("params[{i}]: {e}")))?;
        }
        if self.grids.dummy() < 16 || self.grids.local_dummy < 16 {
            return bad("dummy grids must be at least 16x16".into());
        }
        if self.grids.evaluation < 4 {
            return bad("evaluation grid must be at least 4x4".into());
        }
        if let Some(h) = self.local.bandwidth {
            KernelSpec::new(h)?;
        }
        if let Some(grid) = &self.local.h_grid {
            if grid.is_empty() || grid.iter().any(|h| !(*h > 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
                return bad("h_grid must be a non-empty ascending list of positive bandwidths".into());
            }
        }
        if let Some(s) = self.slic.s {
            SlicParams::new(s, self.slic.g).validate()?;
        }
        if !(self.slic.g > 0.0) || self.slic.n_iter == 0 || self.slic.k_max < 2 {
            return bad("slic needs g > 0, n_iter >= 1 and k_max >= 2".into());
        }
        Ok(())
    }

    pub fn scenario_spec(&self, row: &ParamRow) -> ScenarioSpec {
        ScenarioSpec {
            coding: self.coding,
            expected_n: row.expected_n,
            grid: GridSize::Square(self.grids.simulation),
            seed: self.seed,
            grf: self.grf,
            window: self.window,
            ..ScenarioSpec::new(self.scenario, row.parameters())
        }
    }

    fn needs_local(&self) -> bool {
        self.protocols.contains(&Protocol::Identification) || self.protocols.contains(&Protocol::Mise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub rate: f64,
    pub successes: usize,
    pub mean_agreement: f64,
    pub mean_tiles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseSummary {
    pub global: f64,
    pub local: f64,
    pub tessellated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub params: ParamRow,
    pub replicates: usize,
    pub failures: Vec<ReplicateFailure>,
    pub mean_count: f64,
    pub mean_integral: f64,
    pub bandwidth: Option<f64>,
    pub identification: Option<IdentificationSummary>,
    pub estimates: Option<Vec<EstimateSummary>>,
    pub mise: Option<MiseSummary>,
    #[serde(skip)]
    pub per_replicate: Vec<ReplicateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub scenario: Scenario,
    pub coding: Coding,
    pub seed: u64,
    pub replicates: usize,
    pub protocols: Vec<Protocol>,
    pub rows: Vec<RowResult>,
    pub failed_replicates: usize,
    pub failure_fraction: f64,
}

/// Per-replicate results; `None` where a protocol did not run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub count: usize,
    pub integral: f64,
    pub identified: Option<bool>,
    pub agreement: Option<f64>,
    pub tiles: Option<u32>,
    pub estimates: Option<Vec<f64>>,
    pub mise: Option<[f64; 3]>,
}

struct RowContext<'a> {
    config: &'a ExperimentConfig,
    spec: ScenarioSpec,
    row_index: usize,
    bandwidth: Option<f64>,
    sim_grid: Grid,
    eval_grid: Grid,
}

fn replicate_id(row: usize, replicate: u64) -> u64 {
    ((row as u64) << 32) | replicate
}

fn covariates_of(realization_covariate: &Option<SpatialRaster>) -> Vec<Covariate> {
    realization_covariate
        .iter()
        .map(|r| Covariate::new(COVARIATE_NAME, r.clone()))
        .collect()
}

/// Tessellated specification matching the scenario's intensity formula.
pub fn known_spec(scenario: Scenario, covariates: Vec<Covariate>, tessellation: Tessellation) -> Result<TessellatedSpec> {
    match scenario {
        Scenario::ConstantTiles => TessellatedSpec::general(vec![], Some(tessellation), vec![]),
        Scenario::CovariateEffect => {
            let n = covariates.len();
            TessellatedSpec::general(covariates, None, vec![Some(tessellation); n])
        }
        Scenario::FullEmbedded => Ok(TessellatedSpec::embedded(covariates, tessellation)),
    }
}

/// Converts a tessellated fit with two tiles into scenario parameters in
/// `coding`, ordered as [`Scenario::parameter_names`].
pub fn scenario_estimates(
    fit: &crate::glm::FitResult,
    spec: &TessellatedSpec,
    scenario: Scenario,
    coding: Coding,
    tessellation: &Tessellation,
) -> Result<Vec<f64>> {
    let reference = tessellation.reference_tile() as usize - 1;
    let other = (1..=tessellation.q())
        .find(|&k| k != tessellation.reference_tile())
        .ok_or_else(|| Error::Precondition("estimation needs a two-tile tessellation".into()))? as usize
        - 1;
    let intercepts = tile_coefficients(fit, spec, INTERCEPT)?;
    let slopes = if scenario.has_covariate() {
        tile_coefficients(fit, spec, COVARIATE_NAME)?
    } else {
        vec![0.0]
    };
    let pick = |levels: &[f64], i: usize| if levels.len() == 1 { levels[0] } else { levels[i] };
    let tiles = [
        TileCoefficients {
            intercept: pick(&intercepts, reference),
            slope: pick(&slopes, reference),
        },
        TileCoefficients {
            intercept: pick(&intercepts, other),
            slope: pick(&slopes, other),
        },
    ];
    let params = Parameters::from_tiles(scenario, coding, tiles);
    Ok(scenario
        .parameter_names()
        .iter()
        .map(|n| params.get(n).expect("scenario parameter"))
        .collect())
}

fn nan_to_zero(raster: &SpatialRaster) -> SpatialRaster {
    raster.map(|v| if v.is_finite() { v } else { 0.0 })
}

fn run_replicate(ctx: &RowContext, replicate: usize) -> Result<ReplicateOutcome> {
    let config = ctx.config;
    let (realization, pattern) = ctx.spec.simulate(replicate_id(ctx.row_index, replicate as u64))?;
    let covariates = covariates_of(&realization.covariate);
    let truth_tess = &realization.tessellation;
    let mut out = ReplicateOutcome {
        replicate,
        count: pattern.len(),
        integral: realization.intensity.integral(),
        ..Default::default()
    };

    let mut identified_tess = None;
    let mut local_maps = None;
    if config.needs_local() {
        let h = ctx.bandwidth.expect("bandwidth chosen for local protocols");
        let model = LocalModel::new(
            &pattern,
            &covariates,
            LocalOptions {
                dummy_grid: config.grids.local_dummy,
                ..LocalOptions::default()
            },
        )?;
        let maps = model.maps(&KernelSpec::new(h)?, &ctx.eval_grid)?;
        if config.protocols.contains(&Protocol::Identification)
            || config.mise_tessellation == TessellationSource::Identified
        {
            let params = config.slic.params_for(ctx.eval_grid.len());
            let filled = fill_unsupported(&maps.maps)?;
            let seg = identify_tessellations(&filled, &[params], SegmentationMode::Common)?;
            let found = seg.into_iter().next().expect("one segmentation").tiles.tessellation;
            let agree = agreement(&found, truth_tess)?;
            out.identified = Some(found.q() == 2 && agree >= IDENTIFICATION_AGREEMENT);
            out.agreement = Some(agree);
            out.tiles = Some(found.q());
            identified_tess = Some(found);
        }
        local_maps = Some(maps);
    }

    if config.protocols.contains(&Protocol::Estimation) {
        let spec = known_spec(config.scenario, covariates.clone(), truth_tess.clone())?;
        let fit = fit_tessellated(&pattern, &spec, config.grids.dummy())?;
        if !fit.converged {
            return Err(Error::NotConverged("tessellated fit did not converge".into()));
        }
        out.estimates = Some(scenario_estimates(&fit, &spec, config.scenario, config.coding, truth_tess)?);
    }

    if config.protocols.contains(&Protocol::Mise) {
        let truth = realization.intensity.raster();
        let global_spec = TessellatedSpec::global(covariates.clone());
        let global_fit = fit_tessellated(&pattern, &global_spec, config.grids.dummy())?;
        let global = fitted_intensity(&global_fit, &global_spec, &ctx.sim_grid)?;
        let tess_spec = match config.mise_tessellation {
            TessellationSource::Known => known_spec(config.scenario, covariates.clone(), truth_tess.clone())?,
            TessellationSource::Identified => TessellatedSpec::embedded(
                covariates.clone(),
                identified_tess.clone().expect("identification ran"),
            ),
        };
        let tess_fit = fit_tessellated(&pattern, &tess_spec, config.grids.dummy())?;
        let tessellated = fitted_intensity(&tess_fit, &tess_spec, &ctx.sim_grid)?;
        let maps = local_maps.as_ref().expect("local maps computed");
        let local = nan_to_zero(&maps.intensity(&covariates)?).resample(&ctx.sim_grid)?;
        out.mise = Some([
            mise_true(&global, truth)?,
            mise_true(&local, truth)?,
            mise_true(&tessellated, truth)?,
        ]);
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// LCV bandwidth on a pilot pattern drawn for `row_index`.
fn pilot_bandwidth(config: &ExperimentConfig, spec: &ScenarioSpec, row_index: usize, eval_grid: &Grid) -> Result<f64> {
    let (realization, pattern) = spec.simulate(replicate_id(row_index, PILOT_REPLICATE))?;
    let covariates = covariates_of(&realization.covariate);
    let model = LocalModel::new(
        &pattern,
        &covariates,
        LocalOptions {
            dummy_grid: config.grids.local_dummy,
            ..LocalOptions::default()
        },
    )?;
    let h_grid = config
        .local
        .h_grid
        .clone()
        .unwrap_or_else(|| default_bandwidth_grid(&config.window));
    Ok(select_bandwidth_with(&model, &h_grid, eval_grid)?.h_opt)
}

fn run_row(config: &ExperimentConfig, row_index: usize, row: &ParamRow) -> Result<RowResult> {
    let spec = config.scenario_spec(row);
    spec.validate()?;
    let sim_grid = spec.sim_grid()?;
    let eval_grid = Grid::new(config.grids.evaluation, config.grids.evaluation, config.window)?;
    let bandwidth = if config.needs_local() {
        Some(match config.local.bandwidth {
            Some(h) => h,
            None => pilot_bandwidth(config, &spec, row_index, &eval_grid)?,
        })
    } else {
        None
    };
    let ctx = RowContext {
        config,
        spec,
        row_index,
        bandwidth,
        sim_grid,
        eval_grid,
    };
    let results: Vec<Result<ReplicateOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&ctx, r))
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (replicate, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(ReplicateFailure {
                replicate,
                message: e.to_string(),
            }),
        }
    }
    let counts: Vec<f64> = ok.iter().map(|o| o.count as f64).collect();
    let integrals: Vec<f64> = ok.iter().map(|o| o.integral).collect();

    let identification = config.protocols.contains(&Protocol::Identification).then(|| {
        let successes = ok.iter().filter(|o| o.identified == Some(true)).count();
        IdentificationSummary {
            rate: successes as f64 / ok.len().max(1) as f64,
            successes,
            mean_agreement: mean(&ok.iter().filter_map(|o| o.agreement).collect::<Vec<_>>()),
            mean_tiles: mean(&ok.iter().filter_map(|o| o.tiles.map(f64::from)).collect::<Vec<_>>()),
        }
    });

    let estimates = config.protocols.contains(&Protocol::Estimation).then(|| {
        let truth = row.parameters();
        config
            .scenario
            .parameter_names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let values: Vec<f64> = ok.iter().filter_map(|o| o.estimates.as_ref().map(|e| e[j])).collect();
                let t = truth.get(name).expect("validated parameter");
                EstimateSummary {
                    name: name.to_string(),
                    truth: t,
                    mean: mean(&values),
                    sd: sample_sd(&values),
                    mse: mean(&values.iter().map(|v| (v - t).powi(2)).collect::<Vec<_>>()),
                }
            })
            .collect()
    });

    let mise = config.protocols.contains(&Protocol::Mise).then(|| {
        let col = |i: usize| mean(&ok.iter().filter_map(|o| o.mise.map(|m| m[i])).collect::<Vec<_>>());
        MiseSummary {
            global: col(0),
            local: col(1),
            tessellated: col(2),
        }
    });

    Ok(RowResult {
        params: *row,
        replicates: config.replicates,
        failures,
        mean_count: mean(&counts),
        mean_integral: mean(&integrals),
        bandwidth,
        identification,
        estimates,
        mise,
        per_replicate: ok,
    })
}

/// Runs every row of the experiment. Replicate failures are recorded in the
/// report rather than aborting the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.params.len());
    for (i, row) in config.params.iter().enumerate() {
        log::info!("experiment row {}/{}", i + 1, config.params.len());
        rows.push(run_row(config, i, row)?);
    }
    let failed: usize = rows.iter().map(|r| r.failures.len()).sum();
    let total = config.replicates * config.params.len();
    Ok(ExperimentReport {
        name: config.name.clone().unwrap_or_else(|| "experiment".into()),
        scenario: config.scenario,
        coding: config.coding,
        seed: config.seed,
        replicates: config.replicates,
        protocols: config.protocols.clone(),
        rows,
        failed_replicates: failed,
        failure_fraction: failed as f64 / total as f64,
    })
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt)
}

impl ExperimentReport {
    pub fn failure_limit_exceeded(&self) -> bool {
        self.failure_fraction > MAX_FAILURE_FRACTION
    }

    /// One line per parameter row.
    pub fn to_csv(&self) -> String {
        let names = self.scenario.parameter_names();
        let mut header: Vec<String> = vec!["row".into(), "expected_n".into()];
        header.extend(names.iter().map(|n| n.to_string()));
        header.extend(["replicates", "failures", "mean_count", "mean_integral"].map(String::from));
        let has = |p: Protocol| self.protocols.contains(&p);
        if has(Protocol::Identification) || has(Protocol::Mise) {
            header.push("bandwidth".into());
        }
        if has(Protocol::Identification) {
            header.extend(["rate", "mean_agreement", "mean_tiles"].map(String::from));
        }
        if has(Protocol::Estimation) {
            for n in names {
                for stat in ["mean", "sd", "mse"] {
                    header.push(format!("{n}_{stat}"));
                }
            }
        }
        if has(Protocol::Mise) {
            header.extend(["mise_global", "mise_local", "mise_tessellated"].map(String::from));
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let p = row.params.parameters();
            let mut cells = vec![(i + 1).to_string(), fmt_opt(row.params.expected_n)];
            cells.extend(names.iter().map(|n| fmt_opt(p.get(n))));
            cells.push(row.replicates.to_string());
            cells.push(row.failures.len().to_string());
            cells.push(fmt(row.mean_count));
            cells.push(fmt(row.mean_integral));
            if has(Protocol::Identification) || has(Protocol::Mise) {
                cells.push(fmt_opt(row.bandwidth));
            }
            if let Some(id) = &row.identification {
                cells.extend([fmt(id.rate), fmt(id.mean_agreement), fmt(id.mean_tiles)]);
            }
            if let Some(est) = &row.estimates {
                for e in est {
                    cells.extend([fmt(e.mean), fmt(e.sd), fmt(e.mse)]);
                }
            }
            if let Some(m) = &row.mise {
                cells.extend([fmt(m.global), fmt(m.local), fmt(m.tessellated)]);
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// One line per (row, replicate).
    pub fn replicates_csv(&self) -> String {
        let names = self.scenario.parameter_names();
        let mut out = String::from("row,replicate,count,integral,identified,agreement,tiles");
        for n in names {
            let _ = write!(out, ",{n}_hat");
        }
        out.push_str(",mise_global,mise_local,mise_tessellated\n");
        for (i, row) in self.rows.iter().enumerate() {
            for o in &row.per_replicate {
                let mut cells = vec![
                    (i + 1).to_string(),
                    o.replicate.to_string(),
                    o.count.to_string(),
                    fmt(o.integral),
                    o.identified.map_or("NA".into(), |b| b.to_string()),
                    fmt_opt(o.agreement),
                    o.tiles.map_or("NA".into(), |t| t.to_string()),
                ];
                match &o.estimates {
                    Some(e) => cells.extend(e.iter().map(|v| fmt(*v))),
                    None => cells.extend(names.iter().map(|_| "NA".to_string())),
                }
                match o.mise {
                    Some(m) => cells.extend(m.iter().map(|v| fmt(*v))),
                    None => cells.extend(["NA", "NA", "NA"].map(String::from)),
                }
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `table.csv`, `table.json` and, when asked, `replicates.csv`.
    pub fn write(&self, dir: &Path, diagnostics: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let csv = dir.join("table.csv");
        std::fs::write(&csv, self.to_csv())?;
        written.push(csv);
        let json = dir.join("table.json");
        std::fs::write(&json, self.to_json()?)?;
        written.push(json);
        if diagnostics {
            let reps = dir.join("replicates.csv");
            std::fs::write(&reps, self.replicates_csv())?;
            written.push(reps);
        }
        Ok(written)
    }
}

/// Simulated pattern of replicate `replicate` of row `row`, as the harness draws it.
pub fn replicate_pattern(config: &ExperimentConfig, row: usize, replicate: u64) -> Result<PointPattern> {
    let spec = config.scenario_spec(&config.params[row]);
    Ok(spec.simulate(replicate_id(row, replicate))?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(json)
    }

    #[test]
    fn zero_replicates_is_rejected() {
        let c = config(
            r#"{"scenario": "constant-tiles", "params": [{"beta0": 4.0, "gamma0": 5.0}],
                "replicates": 0, "seed": 1}"#,
        );
        assert!(matches!(c, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn parameters_must_match_scenario() {
        let c = config(
            r#"{"scenario": "covariate-effect", "params": [{"beta0": 4.0, "gamma0": 5.0}],
                "replicates": 3, "seed": 1}"#,
        );
        assert!(c.is_err());
        let unknown = config(
            r#"{"scenario": "constant-tiles", "params": [{"beta0": 4.0, "gamma0": 5.0}],
                "replicates": 3, "seed": 1, "bogus": true}"#,
        );
        assert!(unknown.is_err());
    }

    #[test]
    fn estimation_run_is_deterministic() {
        let c = config(
            r#"{"scenario": "constant-tiles", "params": [{"expected_n": 200, "beta0": 4.0, "gamma0": 5.0}],
                "replicates": 4, "seed": 9, "protocols": ["estimation"], "grids": {"simulation": 32}}"#,
        )
        .unwrap();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.failed_replicates, 0);
        let est = a.rows[0].estimates.as_ref().unwrap();
        assert_eq!(est[0].name, "beta0");
        assert!((est[0].mean - 4.0).abs() < 0.5);
        assert!((est[1].mean - 5.0).abs() < 0.3);
        assert!(a.to_csv().starts_with("row,expected_n,beta0,gamma0,replicates,failures,"));
    }

    #[test]
    fn known_tessellation_estimates_round_trip_the_truth() {
        // a fit reproducing the true tile levels maps back to the scenario parameters
        let g = Grid::new(16, 16, Window::unit_square()).unwrap();
        let tess = Tessellation::diagonal(g);
        for coding in [Coding::Levels, Coding::Additive] {
            let spec = known_spec(Scenario::ConstantTiles, vec![], tess.clone()).unwrap();
            let fit = crate::glm::FitResult {
                columns: vec!["Intercept".into(), "W[Intercept][1]".into()],
                coefficients: vec![3.0, 2.0],
                covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                loglik: 0.0,
                aic: 4.0,
                n_parameters: 2,
                converged: true,
                iterations: 1,
                quadrature: crate::glm::QuadratureSummary {
                    n_data: 0,
                    n_dummy: 1,
                    dummy_grid: [1, 1],
                    total_weight: 1.0,
                },
            };
            let est = scenario_estimates(&fit, &spec, Scenario::ConstantTiles, coding, &tess).unwrap();
            match coding {
                Coding::Levels => assert_eq!(est, vec![3.0, 5.0]),
                Coding::Additive => assert_eq!(est, vec![3.0, 2.0]),
            }
        }
    }
}

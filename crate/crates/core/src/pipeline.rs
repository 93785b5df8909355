//! End-to-end analysis of one observed pattern: local fit, tessellation
//! identification, tessellated and global fits, and model comparison.
//!
//! Every stage writes its outputs before the next one starts, so a failure
//! leaves the earlier results on disk; errors carry the failing stage name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{kernel_intensity, mise_true, select_smoothing_bandwidth};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Tessellation, Window};
use crate::glm::{
    build_quadrature_auto, coef_table, coef_table_csv, fit_poisson_glm, lrt, Covariate, DesignMatrix, FitResult,
    LrtResult, QuadratureScheme,
};
use crate::io;
use crate::local::{default_bandwidth_grid, select_bandwidth_with, CoefficientMaps, KernelSpec, LocalModel, LocalOptions};
use crate::segmentation::{fill_unsupported, identify_tessellations, Segmentation, SegmentationMode, SegmentationParams};
use crate::tessellated::{
    build_tessellated_design, coefficient_surface, fitted_intensity, TessellatedSpec, TessellationMode,
};

pub const NO_CHANGE_MESSAGE: &str = "no spatial change detected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateInput {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalStage {
    /// Fixed bandwidth; otherwise chosen by LCV over `h_grid`.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub h_grid: Option<Vec<f64>>,
    #[serde(default = "default_eval_grid")]
    pub eval_grid: [usize; 2],
    #[serde(default = "default_local_dummy")]
    pub dummy_grid: usize,
    /// Sidecar JSON of precomputed coefficient maps; skips local fitting.
    #[serde(default)]
    pub maps: Option<PathBuf>,
}

fn default_eval_grid() -> [usize; 2] {
    [crate::local::DEFAULT_EVAL_GRID; 2]
}
fn default_local_dummy() -> usize {
    crate::local::DEFAULT_LOCAL_DUMMY_GRID
}
fn default_dummy() -> usize {
    crate::glm::DEFAULT_DUMMY_GRID
}
fn default_level() -> f64 {
    0.95
}

impl Default for LocalStage {
    fn default() -> Self {
        Self {
            bandwidth: None,
            h_grid: None,
            eval_grid: default_eval_grid(),
            dummy_grid: default_local_dummy(),
            maps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SegmentationStage {
    /// Defaults to per-covariate for the general model, common for embedded.
    #[serde(default)]
    pub mode: Option<SegmentationMode>,
    /// One entry for every band, or one per band (intercept first).
    #[serde(default)]
    pub params: Vec<SegmentationParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Point pattern CSV with header `x,y`.
    pub pattern: PathBuf,
    #[serde(default)]
    pub covariates: Vec<CovariateInput>,
    /// Observation window; defaults to the first covariate's extent.
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default)]
    pub local: LocalStage,
    #[serde(default)]
    pub segmentation: SegmentationStage,
    #[serde(default)]
    pub mode: TessellationMode,
    #[serde(default = "default_dummy")]
    pub dummy_grid: usize,
    /// Candidate bandwidths of the residual smoother; default as for LCV.
    #[serde(default)]
    pub mise_bandwidths: Option<Vec<f64>>,
    #[serde(default = "default_level")]
    pub confidence_level: f64,
}

impl PipelineConfig {
    /// Reads a config; relative paths are taken from the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.pattern);
        for c in &mut self.covariates {
            fix(&mut c.path);
        }
        if let Some(m) = &mut self.local.maps {
            fix(m);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let mut paths = vec![&self.pattern];
        paths.extend(self.covariates.iter().map(|c| &c.path));
        paths.extend(self.local.maps.iter());
        if let Some(missing) = paths.iter().find(|p| !p.exists()) {
            return bad(format!("input file {} does not exist", missing.display()));
        }
        if self.window.is_none() && self.covariates.is_empty() {
            return bad("a window is required when no covariate raster is given".into());
        }
        let mut names: Vec<&str> = self.covariates.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) || names.contains(&crate::glm::INTERCEPT) {
            return bad("covariate names must be unique and differ from `Intercept`".into());
        }
        if self.dummy_grid < 16 || self.local.dummy_grid < 16 {
            return bad("dummy grids must be at least 16x16".into());
        }
        if self.local.eval_grid.iter().any(|&n| n < 4) {
            return bad("evaluation grid must be at least 4x4".into());
        }
        if let Some(h) = self.local.bandwidth {
            KernelSpec::new(h)?;
        }
        let n_bands = self.covariates.len() + 1;
        let n_params = self.segmentation.params.len();
        if n_params > 1 && n_params != n_bands {
            return bad(format!("{n_params} segmentation parameter sets for {n_bands} bands"));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return bad("confidence_level must lie in (0, 1)".into());
        }
        Ok(())
    }

    fn segmentation_mode(&self) -> SegmentationMode {
        self.segmentation.mode.unwrap_or(match self.mode {
            TessellationMode::General => SegmentationMode::PerCovariate,
            TessellationMode::Embedded => SegmentationMode::Common,
        })
    }
}

/// One line of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: &'static str,
    pub n_parameters: Option<usize>,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub mise: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub bandwidth: f64,
    pub maps: CoefficientMaps,
    /// `(block, tessellation)` for every tessellated block.
    pub tessellations: Vec<(String, Tessellation)>,
    pub no_change: bool,
    pub global: FitResult,
    pub tessellated: FitResult,
    pub spec: TessellatedSpec,
    pub lrt: LrtResult,
    pub comparison: Vec<ModelSummary>,
    pub smoothing_bandwidth: f64,
    /// Total-effect surface per block on the evaluation grid.
    pub surfaces: Vec<(String, SpatialRaster)>,
    pub written: Vec<PathBuf>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

struct Inputs {
    pattern: PointPattern,
    covariates: Vec<Covariate>,
    window: Window,
}

fn load(config: &PipelineConfig) -> Result<Inputs> {
    let mut covariates = Vec::with_capacity(config.covariates.len());
    for c in &config.covariates {
        covariates.push(Covariate::new(c.name.clone(), io::read_raster(&c.path)?));
    }
    let window = match config.window {
        Some(w) => w,
        None => *covariates[0].raster.window(),
    };
    let pattern = io::read_pattern(&config.pattern, window)?;
    Ok(Inputs {
        pattern,
        covariates,
        window,
    })
}

fn in_mask(covariates: &[Covariate], x: f64, y: f64) -> bool {
    covariates.iter().all(|c| c.value_at(x, y).is_ok_and(f64::is_finite))
}

/// Quadrature without dummy cells whose centers fall outside the covariates' mask.
fn masked_quadrature(pattern: &PointPattern, covariates: &[Covariate], base: usize) -> Result<QuadratureScheme> {
    let quad = build_quadrature_auto(pattern, base)?;
    if covariates.iter().all(|c| c.raster.bands().iter().all(|b| b.iter().all(|v| v.is_finite()))) {
        return Ok(quad);
    }
    quad.restrict(|x, y| in_mask(covariates, x, y))
}

/// Sets pixels outside the covariates' mask to NaN in every band.
fn apply_mask(raster: &SpatialRaster, covariates: &[Covariate]) -> Result<SpatialRaster> {
    let grid = *raster.grid();
    let keep: Vec<bool> = grid.centers().map(|[x, y]| in_mask(covariates, x, y)).collect();
    let bands = raster
        .bands()
        .iter()
        .map(|b| b.iter().zip(&keep).map(|(&v, &k)| if k { v } else { f64::NAN }).collect())
        .collect();
    SpatialRaster::new(grid, bands)
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v}"))
}

pub fn comparison_csv(rows: &[ModelSummary]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.to_string(),
                r.n_parameters.map_or("NA".into(), |n| n.to_string()),
                fmt_opt(r.loglik),
                fmt_opt(r.aic),
                format!("{}", r.mise),
            ]
        })
        .collect();
    io::csv_table(&["model", "n_parameters", "loglik", "aic", "mise"], &body)
}

fn tessellated_spec(
    config: &PipelineConfig,
    covariates: &[Covariate],
    segmentations: &[Segmentation],
) -> Result<(TessellatedSpec, Vec<(String, Tessellation)>)> {
    let mut blocks = vec![crate::glm::INTERCEPT.to_string()];
    blocks.extend(covariates.iter().map(|c| c.name.clone()));
    match config.mode {
        TessellationMode::Embedded => {
            let tess = segmentations[0].tessellation().clone();
            let listed = vec![("common".to_string(), tess.clone())];
            Ok((TessellatedSpec::embedded(covariates.to_vec(), tess), listed))
        }
        TessellationMode::General => {
            let tess_of = |band: usize| -> Tessellation {
                segmentations
                    .iter()
                    .find(|s| s.bands.contains(&band))
                    .expect("every band segmented")
                    .tessellation()
                    .clone()
            };
            let listed: Vec<(String, Tessellation)> =
                blocks.iter().enumerate().map(|(b, name)| (name.clone(), tess_of(b))).collect();
            let spec = TessellatedSpec::general(
                covariates.to_vec(),
                Some(listed[0].1.clone()),
                listed[1..].iter().map(|(_, t)| Some(t.clone())).collect(),
            )?;
            Ok((spec, listed))
        }
    }
}

/// Runs the whole analysis and writes its outputs to `out`.
pub fn analyze(config: &PipelineConfig, out: &Path) -> Result<AnalysisReport> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let Inputs {
        pattern,
        covariates,
        window,
    } = stage("load", load(config))?;
    let eval_grid = stage("load", Grid::new(config.local.eval_grid[0], config.local.eval_grid[1], window))?;

    // local fit or precomputed maps
    let maps = stage(
        "local",
        (|| -> Result<CoefficientMaps> {
            if let Some(sidecar) = &config.local.maps {
                let maps = CoefficientMaps::read(sidecar)?;
                let expected: Vec<String> = std::iter::once(crate::glm::INTERCEPT.to_string())
                    .chain(covariates.iter().map(|c| c.name.clone()))
                    .collect();
                if maps.columns != expected {
                    return Err(Error::GeometryMismatch(format!(
                        "precomputed maps have columns {:?}, the model needs {:?}",
                        maps.columns, expected
                    )));
                }
                return Ok(maps);
            }
            let quad = masked_quadrature(&pattern, &covariates, config.local.dummy_grid)?;
            let model = LocalModel::with_quadrature(
                quad,
                &covariates,
                LocalOptions {
                    dummy_grid: config.local.dummy_grid,
                    ..LocalOptions::default()
                },
            )?;
            let bandwidth = match config.local.bandwidth {
                Some(h) => h,
                None => {
                    let h_grid = config.local.h_grid.clone().unwrap_or_else(|| default_bandwidth_grid(&window));
                    let selection = select_bandwidth_with(&model, &h_grid, &eval_grid)?;
                    write(out.join("lcv.csv"), &selection.to_csv(), &mut written)?;
                    selection.h_opt
                }
            };
            let mut maps = model.maps(&KernelSpec::new(bandwidth)?, &eval_grid)?;
            maps.maps = apply_mask(&maps.maps, &covariates)?;
            maps.write(&out.join("local"), "coef")?;
            written.push(out.join("local").join("coef.json"));
            Ok(maps)
        })(),
    )?;
    let eval_grid = *maps.grid();

    let segmentations = stage(
        "segment",
        (|| -> Result<Vec<Segmentation>> {
            let filled = apply_mask(&fill_unsupported(&maps.maps)?, &covariates)?;
            let params = if config.segmentation.params.is_empty() {
                vec![SegmentationParams::default()]
            } else {
                config.segmentation.params.clone()
            };
            identify_tessellations(&filled, &params, config.segmentation_mode())
        })(),
    )?;
    let (spec, tessellations) = stage("segment", tessellated_spec(config, &covariates, &segmentations))?;
    stage(
        "segment",
        (|| -> Result<()> {
            for (block, t) in &tessellations {
                let path = out.join(format!("tessellation_{}.txt", file_stem(block)));
                io::write_tessellation(&path, t)?;
                written.push(path);
            }
            let meta: Vec<serde_json::Value> = segmentations
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "bands": s.bands.iter().map(|&b| maps.columns[b].clone()).collect::<Vec<_>>(),
                        "S": s.slic.s,
                        "g": s.slic.g,
                        "superpixels": s.superpixels.n_superpixels(),
                        "k_star": s.tiles.clustering.k_star,
                        "silhouettes": s.tiles.clustering.silhouettes,
                    })
                })
                .collect();
            write(out.join("segmentation.json"), &serde_json::to_string_pretty(&meta)?, &mut written)
        })(),
    )?;
    let no_change = tessellations.iter().all(|(_, t)| t.q() == 1);

    let quad = stage("fit", masked_quadrature(&pattern, &covariates, config.dummy_grid))?;
    let tessellated = stage(
        "fit",
        build_tessellated_design(&quad, &spec).and_then(|d| fit_poisson_glm(&quad, &d)),
    )?;
    let global = stage(
        "fit",
        DesignMatrix::global(&quad, &covariates).and_then(|d| fit_poisson_glm(&quad, &d)),
    )?;
    stage(
        "fit",
        (|| -> Result<()> {
            let level = config.confidence_level;
            write(out.join("coef_tessellated.csv"), &coef_table_csv(&coef_table(&tessellated, level)?), &mut written)?;
            write(out.join("coef_global.csv"), &coef_table_csv(&coef_table(&global, level)?), &mut written)?;
            write(out.join("fit_tessellated.json"), &serde_json::to_string_pretty(&tessellated)?, &mut written)?;
            write(out.join("fit_global.json"), &serde_json::to_string_pretty(&global)?, &mut written)
        })(),
    )?;

    let (comparison, lrt_result, smoothing_bandwidth, surfaces) = stage(
        "evaluate",
        (|| -> Result<_> {
            let test = lrt(&global, &tessellated)?;
            let bw_grid = config.mise_bandwidths.clone().unwrap_or_else(|| default_bandwidth_grid(&window));
            let smoothing = select_smoothing_bandwidth(&pattern, &bw_grid)?.bandwidth;
            let smooth = apply_mask(&kernel_intensity(&pattern, smoothing, &eval_grid)?, &covariates)?;
            let global_spec = TessellatedSpec::global(covariates.clone());
            let lambda_global = fitted_intensity(&global, &global_spec, &eval_grid)?;
            let lambda_tess = fitted_intensity(&tessellated, &spec, &eval_grid)?;
            let lambda_local = maps.intensity(&covariates)?;
            let comparison = vec![
                ModelSummary {
                    model: "global",
                    n_parameters: Some(global.n_parameters),
                    loglik: Some(global.loglik),
                    aic: Some(global.aic()),
                    mise: mise_true(&lambda_global, &smooth)?,
                },
                ModelSummary {
                    model: "local",
                    n_parameters: None,
                    loglik: None,
                    aic: None,
                    mise: mise_true(&lambda_local, &smooth)?,
                },
                ModelSummary {
                    model: "tessellated",
                    n_parameters: Some(tessellated.n_parameters),
                    loglik: Some(tessellated.loglik),
                    aic: Some(tessellated.aic()),
                    mise: mise_true(&lambda_tess, &smooth)?,
                },
            ];
            let mut surfaces = Vec::new();
            for block in spec.blocks() {
                let s = apply_mask(&coefficient_surface(&tessellated, &spec, &block, &eval_grid)?, &covariates)?;
                let path = out.join(format!("surface_{}.txt", file_stem(&block)));
                io::write_raster_band(&path, &s, 0)?;
                written.push(path);
                surfaces.push((block, s));
            }
            Ok((comparison, test, smoothing, surfaces))
        })(),
    )?;

    stage(
        "report",
        (|| -> Result<()> {
            write(out.join("comparison.csv"), &comparison_csv(&comparison), &mut written)?;
            write(
                out.join("lrt.csv"),
                &io::csv_table(
                    &["statistic", "df", "p_value"],
                    &[vec![
                        format!("{}", lrt_result.statistic),
                        lrt_result.df.to_string(),
                        format!("{}", lrt_result.p_value),
                    ]],
                ),
                &mut written,
            )?;
            let mut summary = format!(
                "bandwidth {}\nsmoothing bandwidth {}\n",
                maps.bandwidth, smoothing_bandwidth
            );
            for (block, t) in &tessellations {
                summary.push_str(&format!("tiles[{block}] {}\n", t.q()));
            }
            if no_change {
                summary.push_str(NO_CHANGE_MESSAGE);
                summary.push('\n');
            }
            write(out.join("summary.txt"), &summary, &mut written)
        })(),
    )?;

    Ok(AnalysisReport {
        bandwidth: maps.bandwidth,
        maps,
        tessellations,
        no_change,
        global,
        tessellated,
        spec,
        lrt: lrt_result,
        comparison,
        smoothing_bandwidth,
        surfaces,
        written,
    })
}

/// File-name-safe form of a block name.
pub fn file_stem(block: &str) -> String {
    block
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

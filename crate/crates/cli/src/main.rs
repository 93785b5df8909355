//! `tessreg`: simulate, fit and segment spatial point patterns, run the full
//! tessellated-regression analysis, or reproduce a Monte Carlo experiment.
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on an invalid
//! configuration or input.

mod heatmap;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tessreg::experiment::{run_experiment, ExperimentConfig};
use tessreg::glm::{build_quadrature_auto, coef_table, coef_table_csv, fit_poisson_glm, Covariate, DesignMatrix};
use tessreg::io;
use tessreg::local::{default_bandwidth_grid, select_bandwidth_with, CoefficientMaps, KernelSpec, LocalModel, LocalOptions};
use tessreg::pipeline::{analyze, file_stem, PipelineConfig, NO_CHANGE_MESSAGE};
use tessreg::segmentation::{
    fill_unsupported, identify_tessellations, ClusterParams, SegmentationMode, SegmentationParams, SlicParams,
};
use tessreg::simulation::ScenarioSpec;
use tessreg::tessellated::{coefficient_surface, fit_tessellated, TessellatedSpec};
use tessreg::{Grid, PointPattern, Tessellation, Window};

#[derive(Parser, Debug)]
#[command(name = "tessreg", version, about = "Tessellated spatial Poisson point-process regression")]
struct Cli {
    /// Master seed; overrides the seed of simulation specs and experiment configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one pattern from a scenario spec.
    Simulate {
        /// Scenario spec JSON.
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Fit the global log-linear Poisson model.
    FitGlobal {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = tessreg::glm::DEFAULT_DUMMY_GRID)]
        dummy_grid: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Fit local coefficient maps, choosing the bandwidth by LCV unless given.
    FitLocal {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Comma-separated candidate bandwidths.
        #[arg(long, value_delimiter = ',')]
        h_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = tessreg::local::DEFAULT_EVAL_GRID)]
        eval_grid: usize,
        #[arg(long, default_value_t = tessreg::local::DEFAULT_LOCAL_DUMMY_GRID)]
        dummy_grid: usize,
    },
    /// Segment coefficient maps into tessellations.
    Segment {
        /// Coefficient-map sidecar JSON written by `fit-local`.
        maps: PathBuf,
        #[arg(long, value_enum, default_value = "per-covariate")]
        mode: ModeArg,
        /// Initial center spacing in pixels (default: size-based).
        #[arg(long = "S")]
        s: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 10)]
        n_iter: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Fit a tessellated model with given tessellations.
    FitTessellated {
        #[command(flatten)]
        data: DataArgs,
        /// `BLOCK=path` tessellation of a block (`Intercept` or a covariate).
        #[arg(long = "tessellation", value_parser = parse_named_path)]
        tessellations: Vec<(String, PathBuf)>,
        /// One tessellation shared by every block.
        #[arg(long, conflicts_with = "tessellations")]
        embedded: Option<PathBuf>,
        #[arg(long, default_value_t = tessreg::glm::DEFAULT_DUMMY_GRID)]
        dummy_grid: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Full analysis: local fit, segmentation, tessellated and global fits, comparison.
    Analyze {
        /// Pipeline config JSON.
        config: PathBuf,
    },
    /// Run a Monte Carlo experiment preset.
    Experiment {
        /// Experiment config JSON.
        config: PathBuf,
        /// Validate the config and exit without running or writing anything.
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    PerCovariate,
    Common,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Point pattern CSV with header `x,y`.
    #[arg(long)]
    pattern: PathBuf,
    /// `NAME=path` covariate raster; repeatable.
    #[arg(long = "covariate", value_parser = parse_named_path)]
    covariates: Vec<(String, PathBuf)>,
    /// `xmin,xmax,ymin,ymax`; defaults to the first covariate's extent, else the unit square.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    window: Option<Vec<f64>>,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=path, got `{s}`"))?;
    if name.is_empty() {
        return Err(format!("empty name in `{s}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn config(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn config(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Data {
    pattern: PointPattern,
    covariates: Vec<Covariate>,
    window: Window,
}

fn load_data(args: &DataArgs) -> Result<Data> {
    let mut covariates = Vec::new();
    for (name, path) in &args.covariates {
        let raster = io::read_raster(path).with_context(|| format!("reading covariate {}", path.display()))?;
        covariates.push(Covariate::new(name.clone(), raster));
    }
    let window = match &args.window {
        Some(w) => Window::new(w[0], w[1], w[2], w[3])?,
        None => covariates.first().map_or_else(Window::unit_square, |c| *c.raster.window()),
    };
    let pattern = io::read_pattern(&args.pattern, window)
        .with_context(|| format!("reading pattern {}", args.pattern.display()))?;
    Ok(Data {
        pattern,
        covariates,
        window,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn check_dummy_grid(n: usize) -> Result<()> {
    if n < 16 {
        bail!("dummy grid must be at least 16x16, got {n}");
    }
    Ok(())
}

fn cmd_simulate(cli: &Cli, spec_path: &Path, replicate: u64) -> Outcome {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .config()?;
    let mut spec: ScenarioSpec = serde_json::from_str(&text)
        .map_err(|e| anyhow!("invalid scenario spec: {e}"))
        .config()?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate().config()?;
    let (realization, pattern) = spec.simulate(replicate).runtime()?;
    let out = &cli.out;
    std::fs::create_dir_all(out).runtime()?;
    io::write_pattern(&out.join("pattern.csv"), &pattern).runtime()?;
    io::write_raster_band(&out.join("intensity.txt"), realization.intensity.raster(), 0).runtime()?;
    io::write_tessellation(&out.join("tessellation.txt"), &realization.tessellation).runtime()?;
    if let Some(z) = &realization.covariate {
        io::write_raster_band(&out.join("covariate.txt"), z, 0).runtime()?;
    }
    println!("n = {}", pattern.len());
    println!("integral = {}", realization.intensity.integral());
    Ok(())
}

fn cmd_fit_global(cli: &Cli, data: &DataArgs, dummy_grid: usize, level: f64) -> Outcome {
    check_dummy_grid(dummy_grid).config()?;
    let d = load_data(data).config()?;
    let quad = build_quadrature_auto(&d.pattern, dummy_grid).runtime()?;
    let design = DesignMatrix::global(&quad, &d.covariates).runtime()?;
    let fit = fit_poisson_glm(&quad, &design).runtime()?;
    let table = coef_table_csv(&coef_table(&fit, level).config()?);
    std::fs::create_dir_all(&cli.out).runtime()?;
    write_file(&cli.out.join("coef_global.csv"), &table).runtime()?;
    write_file(&cli.out.join("fit_global.json"), &serde_json::to_string_pretty(&fit).runtime()?).runtime()?;
    print!("{table}");
    println!("loglik = {}, AIC = {}", fit.loglik, fit.aic());
    Ok(())
}

fn cmd_fit_local(
    cli: &Cli,
    data: &DataArgs,
    bandwidth: Option<f64>,
    h_grid: &Option<Vec<f64>>,
    eval: usize,
    dummy_grid: usize,
) -> Outcome {
    check_dummy_grid(dummy_grid).config()?;
    if let Some(h) = bandwidth {
        KernelSpec::new(h).config()?;
    }
    let d = load_data(data).config()?;
    let eval_grid = Grid::new(eval, eval, d.window).config()?;
    let model = LocalModel::new(
        &d.pattern,
        &d.covariates,
        LocalOptions {
            dummy_grid,
            ..LocalOptions::default()
        },
    )
    .runtime()?;
    std::fs::create_dir_all(&cli.out).runtime()?;
    let h = match bandwidth {
        Some(h) => h,
        None => {
            let grid = h_grid.clone().unwrap_or_else(|| default_bandwidth_grid(&d.window));
            let selection = select_bandwidth_with(&model, &grid, &eval_grid).runtime()?;
            write_file(&cli.out.join("lcv.csv"), &selection.to_csv()).runtime()?;
            selection.h_opt
        }
    };
    let maps = model.maps(&KernelSpec::new(h).runtime()?, &eval_grid).runtime()?;
    maps.write(&cli.out, "coef").runtime()?;
    for (b, name) in maps.columns.iter().enumerate() {
        heatmap::write_band(&cli.out.join(format!("coef_{}.png", file_stem(name))), &maps.maps, b).runtime()?;
    }
    println!("bandwidth = {h}");
    if maps.nan_pixels > 0 {
        println!("{} pixels not estimable", maps.nan_pixels);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_segment(cli: &Cli, maps_path: &Path, mode: ModeArg, s: Option<usize>, g: f64, n_iter: usize, k_max: usize, tau: f64) -> Outcome {
    let maps = CoefficientMaps::read(maps_path).config()?;
    let slic = s.map(|s| SlicParams { s, g, n_iter });
    if let Some(p) = &slic {
        p.validate().config()?;
    }
    if !(g > 0.0) || n_iter == 0 || k_max < 2 {
        return Err(Failure::Config(anyhow!("segmentation needs g > 0, n_iter >= 1 and k_max >= 2")));
    }
    let params = SegmentationParams {
        slic,
        cluster: ClusterParams { k_max, tau },
    };
    let mode = match mode {
        ModeArg::PerCovariate => SegmentationMode::PerCovariate,
        ModeArg::Common => SegmentationMode::Common,
    };
    let filled = fill_unsupported(&maps.maps).runtime()?;
    let segs = identify_tessellations(&filled, &[params], mode).runtime()?;
    std::fs::create_dir_all(&cli.out).runtime()?;
    let mut meta = Vec::new();
    for seg in &segs {
        let name = match mode {
            SegmentationMode::Common => "common".to_string(),
            SegmentationMode::PerCovariate => maps.columns[seg.bands[0]].clone(),
        };
        let stem = file_stem(&name);
        io::write_tessellation(&cli.out.join(format!("tessellation_{stem}.txt")), seg.tessellation()).runtime()?;
        heatmap::write_tessellation(&cli.out.join(format!("tessellation_{stem}.png")), seg.tessellation()).runtime()?;
        let sp = Tessellation::new(seg.superpixels.grid, seg.superpixels.labels.clone()).runtime()?;
        io::write_tessellation(&cli.out.join(format!("superpixels_{stem}.txt")), &sp).runtime()?;
        let silhouettes: Vec<Vec<String>> = seg
            .tiles
            .clustering
            .silhouettes
            .iter()
            .map(|(k, s)| vec![k.to_string(), format!("{s}")])
            .collect();
        write_file(
            &cli.out.join(format!("silhouette_{stem}.csv")),
            &io::csv_table(&["k", "silhouette"], &silhouettes),
        )
        .runtime()?;
        meta.push(serde_json::json!({
            "name": name,
            "S": seg.slic.s,
            "g": seg.slic.g,
            "superpixels": seg.superpixels.n_superpixels(),
            "k_star": seg.tiles.clustering.k_star,
            "silhouettes": seg.tiles.clustering.silhouettes,
        }));
        println!("{name}: {} tiles", seg.tessellation().q());
    }
    write_file(&cli.out.join("segmentation.json"), &serde_json::to_string_pretty(&meta).runtime()?).runtime()?;
    Ok(())
}

fn cmd_fit_tessellated(
    cli: &Cli,
    data: &DataArgs,
    tessellations: &[(String, PathBuf)],
    embedded: &Option<PathBuf>,
    dummy_grid: usize,
    level: f64,
) -> Outcome {
    check_dummy_grid(dummy_grid).config()?;
    let d = load_data(data).config()?;
    let spec = (|| -> Result<TessellatedSpec> {
        if let Some(path) = embedded {
            return Ok(TessellatedSpec::embedded(d.covariates.clone(), io::read_tessellation(path)?));
        }
        let mut intercept = None;
        let mut per_cov = vec![None; d.covariates.len()];
        for (block, path) in tessellations {
            let t = io::read_tessellation(path).with_context(|| format!("reading {}", path.display()))?;
            if block == tessreg::glm::INTERCEPT {
                intercept = Some(t);
            } else {
                let j = d
                    .covariates
                    .iter()
                    .position(|c| &c.name == block)
                    .ok_or_else(|| anyhow!("tessellation for unknown covariate `{block}`"))?;
                per_cov[j] = Some(t);
            }
        }
        Ok(TessellatedSpec::general(d.covariates.clone(), intercept, per_cov)?)
    })()
    .config()?;
    let fit = fit_tessellated(&d.pattern, &spec, dummy_grid).runtime()?;
    let table = coef_table_csv(&coef_table(&fit, level).config()?);
    std::fs::create_dir_all(&cli.out).runtime()?;
    write_file(&cli.out.join("coef_tessellated.csv"), &table).runtime()?;
    write_file(&cli.out.join("fit_tessellated.json"), &serde_json::to_string_pretty(&fit).runtime()?).runtime()?;
    let grid = match d.covariates.first() {
        Some(c) => *c.raster.grid(),
        None => Grid::new(tessreg::local::DEFAULT_EVAL_GRID, tessreg::local::DEFAULT_EVAL_GRID, d.window).runtime()?,
    };
    for block in spec.blocks() {
        let surface = coefficient_surface(&fit, &spec, &block, &grid).runtime()?;
        let stem = file_stem(&block);
        io::write_raster_band(&cli.out.join(format!("surface_{stem}.txt")), &surface, 0).runtime()?;
        heatmap::write_band(&cli.out.join(format!("surface_{stem}.png")), &surface, 0).runtime()?;
    }
    print!("{table}");
    println!("loglik = {}, AIC = {}", fit.loglik, fit.aic());
    Ok(())
}

fn cmd_analyze(cli: &Cli, config_path: &Path) -> Outcome {
    let config = PipelineConfig::from_file(config_path)
        .with_context(|| format!("loading {}", config_path.display()))
        .config()?;
    let report = analyze(&config, &cli.out).runtime()?;
    for (block, s) in &report.surfaces {
        heatmap::write_band(&cli.out.join(format!("surface_{}.png", file_stem(block))), s, 0).runtime()?;
    }
    for (block, t) in &report.tessellations {
        heatmap::write_tessellation(&cli.out.join(format!("tessellation_{}.png", file_stem(block))), t).runtime()?;
    }
    for (b, name) in report.maps.columns.iter().enumerate() {
        heatmap::write_band(&cli.out.join(format!("local_{}.png", file_stem(name))), &report.maps.maps, b).runtime()?;
    }
    println!("bandwidth = {}", report.bandwidth);
    for (block, t) in &report.tessellations {
        println!("tiles[{block}] = {}", t.q());
    }
    if report.no_change {
        println!("{NO_CHANGE_MESSAGE}");
    }
    print!("{}", tessreg::pipeline::comparison_csv(&report.comparison));
    println!(
        "LRT: statistic = {}, df = {}, p = {}",
        report.lrt.statistic, report.lrt.df, report.lrt.p_value
    );
    Ok(())
}

fn cmd_experiment(cli: &Cli, config_path: &Path, dry_run: bool) -> Outcome {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))
        .config()?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow!("invalid experiment config: {e}"))
        .config()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().config()?;
    if dry_run {
        println!(
            "config valid: {} rows x {} replicates",
            config.params.len(),
            config.replicates
        );
        return Ok(());
    }
    let report = run_experiment(&config).runtime()?;
    report.write(&cli.out, config.diagnostics).runtime()?;
    print!("{}", report.to_csv());
    if report.failure_limit_exceeded() {
        return Err(Failure::Runtime(anyhow!(
            "{} of {} replicates failed ({:.1}% > 5%)",
            report.failed_replicates,
            config.replicates * config.params.len(),
            100.0 * report.failure_fraction
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().runtime()?;
    }
    match &cli.command {
        Command::Simulate { spec, replicate } => cmd_simulate(cli, spec, *replicate),
        Command::FitGlobal { data, dummy_grid, level } => cmd_fit_global(cli, data, *dummy_grid, *level),
        Command::FitLocal {
            data,
            bandwidth,
            h_grid,
            eval_grid,
            dummy_grid,
        } => cmd_fit_local(cli, data, *bandwidth, h_grid, *eval_grid, *dummy_grid),
        Command::Segment {
            maps,
            mode,
            s,
            g,
            n_iter,
            k_max,
            tau,
        } => cmd_segment(cli, maps, *mode, *s, *g, *n_iter, *k_max, *tau),
        Command::FitTessellated {
            data,
            tessellations,
            embedded,
            dummy_grid,
            level,
        } => cmd_fit_tessellated(cli, data, tessellations, embedded, *dummy_grid, *level),
        Command::Analyze { config } => cmd_analyze(cli, config),
        Command::Experiment { config, dry_run } => cmd_experiment(cli, config, *dry_run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

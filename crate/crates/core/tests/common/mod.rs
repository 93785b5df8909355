//! Fixtures and independent reference computations shared by the oracle,
//! invariant and acceptance test targets. Each check returns the measured
//! quantity so callers decide how to report it.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tessreg::evaluation::kernel_intensity;
use tessreg::glm::{build_quadrature, fit_poisson_glm, lrt, Covariate, DesignMatrix};
use tessreg::local::{KernelSpec, LocalModel, LocalOptions};
use tessreg::rng::{stream, Purpose};
use tessreg::segmentation::cluster::silhouette;
use tessreg::segmentation::slic::{slic_assign, SlicParams, SlicRun};
use tessreg::simulation::{Coding, Parameters, Scenario, ScenarioSpec};
use tessreg::tessellated::{coefficient_surface, fit_tessellated, TessellatedSpec};
use tessreg::{Grid, PointPattern, SpatialRaster, Tessellation, Window};

pub const DUMMY_GRID: usize = 32;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, 0, Purpose::Generic)
}

pub fn unit_grid(n: usize) -> Grid {
    Grid::new(n, n, Window::unit_square()).unwrap()
}

pub fn uniform_pattern(n: usize, r: &mut impl Rng) -> PointPattern {
    let pts = (0..n).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
    PointPattern::new(pts, Window::unit_square()).unwrap()
}

/// Points with density proportional to `1 + 3x`, by rejection.
pub fn tilted_pattern(n: usize, r: &mut impl Rng) -> PointPattern {
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let (x, y): (f64, f64) = (r.random(), r.random());
        if r.random::<f64>() * 4.0 < 1.0 + 3.0 * x {
            pts.push([x, y]);
        }
    }
    PointPattern::new(pts, Window::unit_square()).unwrap()
}

/// Smooth random covariate on a 32x32 grid.
pub fn smooth_covariate(name: &str, r: &mut impl Rng) -> Covariate {
    let (a, b, c, f): (f64, f64, f64, f64) = (
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(1.0..4.0),
    );
    let raster = SpatialRaster::from_fn(unit_grid(32), move |x, y| a * x + b * y + c * (f * (x + y)).sin());
    Covariate::new(name, raster)
}

/// Axis-aligned cuts giving 2 to 4 tiles on a 16x16 grid.
pub fn random_tessellation(r: &mut impl Rng) -> Tessellation {
    let cx: f64 = r.random_range(0.25..0.75);
    let cy: f64 = r.random_range(0.25..0.75);
    let both = r.random::<bool>();
    Tessellation::from_fn(unit_grid(16), move |x, y| {
        1 + u32::from(x > cx) + if both { 2 * u32::from(y > cy) } else { 0 }
    })
    .unwrap()
}

// ---------------------------------------------------------------- optimizer

/// Nelder–Mead simplex minimizer (standard reflection/expansion/contraction/shrink).
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Direct evaluation of `sum_data eta - sum_k a_k exp(eta_k)`.
pub fn quadrature_loglik(design: &DesignMatrix, weights: &[f64], n_data: usize, theta: &[f64]) -> f64 {
    (0..design.n_rows())
        .map(|k| {
            let eta: f64 = design.row(k).iter().zip(theta).map(|(x, t)| x * t).sum();
            let data = if k < n_data { eta } else { 0.0 };
            data - weights[k] * eta.exp()
        })
        .sum()
}

/// Largest coefficient gap between IRLS and a derivative-free maximization of
/// the same quadrature log-likelihood, on a random instance with at most five
/// columns.
pub fn irls_vs_simplex_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(40..160);
    let pattern = tilted_pattern(n, &mut r);
    let p_cov = r.random_range(0..=4);
    let covariates: Vec<Covariate> = (0..p_cov).map(|j| smooth_covariate(&format!("Z{j}"), &mut r)).collect();
    let dummy = r.random_range(8..20);
    let quad = build_quadrature(&pattern, dummy, dummy).unwrap();
    let design = DesignMatrix::global(&quad, &covariates).unwrap();
    let fit = fit_poisson_glm(&quad, &design).unwrap();
    assert!(fit.converged);
    let objective = |t: &[f64]| -quadrature_loglik(&design, quad.weights(), quad.n_data(), t);
    let mut start = vec![0.0; design.n_cols()];
    start[0] = (n as f64).ln();
    let mut x = nelder_mead(&objective, &start, 0.5, 1e-11, 200_000);
    // restarts escape premature simplex collapse
    for _ in 0..4 {
        x = nelder_mead(&objective, &x, 1e-3, 1e-12, 200_000);
    }
    x.iter()
        .zip(&fit.coefficients)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- silhouette

/// Silhouette straight from its definition with explicit per-cluster loops.
pub fn silhouette_by_definition(values: &[Vec<f64>], labels: &[u32]) -> f64 {
    let n = values.len();
    let dist = |i: usize, j: usize| -> f64 {
        values[i]
            .iter()
            .zip(&values[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut clusters: Vec<u32> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |c: u32| -> Option<f64> {
            let mut sum = 0.0;
            let mut count = 0usize;
            for j in 0..n {
                if j != i && labels[j] == c {
                    sum += dist(i, j);
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        };
        let Some(a) = mean_to(labels[i]) else {
            continue; // singleton
        };
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .filter_map(|&c| mean_to(c))
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

pub fn silhouette_matches(values: &[Vec<f64>], labels: &[u32]) -> bool {
    silhouette(values, labels).unwrap() == silhouette_by_definition(values, labels)
}

pub fn random_clustering(seed: u64) -> (Vec<Vec<f64>>, Vec<u32>) {
    let mut r = rng(seed);
    let n = r.random_range(3..=50);
    let dims = r.random_range(1..=3);
    let k = r.random_range(2..=n.min(6)) as u32;
    let values: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dims).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let mut labels: Vec<u32> = (0..n).map(|_| r.random_range(1..=k)).collect();
    labels[0] = 1;
    labels[1] = 2;
    (values, labels)
}

// ---------------------------------------------------------------- SLIC

/// Random piecewise-smooth maps with `bands` bands on an `n x n` grid.
pub fn random_maps(seed: u64, n: usize, bands: usize) -> SpatialRaster {
    let mut r = rng(seed);
    let grid = unit_grid(n);
    let layers = (0..bands)
        .map(|_| {
            let cut: f64 = r.random_range(0.2..0.8);
            let jump: f64 = r.random_range(0.5..3.0);
            let noise: Vec<f64> = (0..grid.len()).map(|_| r.random_range(-0.3..0.3)).collect();
            grid.centers()
                .enumerate()
                .map(|(i, [x, y])| if x + 0.5 * y > cut { jump } else { 0.0 } + noise[i])
                .collect()
        })
        .collect();
    SpatialRaster::new(grid, layers).unwrap()
}

/// Pixels whose final label differs from a brute-force pass over all centers:
/// each pixel takes the closest center among those whose `2S x 2S` window
/// covers it and its own current center (lowest index on ties).
pub fn slic_assignment_mismatches(run: &SlicRun) -> usize {
    let s = run.params.s as f64;
    let mut mismatches = 0;
    for i in 0..run.grid.len() {
        if run.labels[i] == 0 {
            continue;
        }
        let (col, row) = run.grid.col_row(i);
        let mut best: Option<(usize, f64)> = None;
        for (c, center) in run.centers.iter().enumerate() {
            let own = run.labels[i] as usize == c + 1;
            let covered = (col as f64 - center.col).abs() <= s && (row as f64 - center.row).abs() <= s;
            if !own && !covered {
                continue;
            }
            let colour: f64 = run.features.iter().zip(&center.values).map(|(b, v)| (b[i] - v).powi(2)).sum();
            let space = (col as f64 - center.col).powi(2) + (row as f64 - center.row).powi(2);
            let d = colour + run.params.g * space / (s * s);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        if best.map(|(c, _)| c as u32 + 1) != Some(run.labels[i]) {
            mismatches += 1;
        }
    }
    mismatches
}

/// Converged SLIC run on random maps.
pub fn converged_slic(seed: u64) -> SlicRun {
    let mut r = rng(seed ^ 0x5a5a);
    let n = r.random_range(12..40);
    let bands = r.random_range(1..=3);
    let params = SlicParams {
        s: r.random_range(3..=6),
        g: r.random_range(0.2..3.0),
        n_iter: 500,
    };
    slic_assign(&random_maps(seed, n, bands), &params).unwrap()
}

// ---------------------------------------------------------------- invariants

pub fn quadrature_weight_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let w = Window::new(-1.0, r.random_range(0.5..3.0), 2.0, r.random_range(2.5..4.0)).unwrap();
    let n = r.random_range(0..300);
    let pts = (0..n)
        .map(|_| [r.random_range(w.xmin()..w.xmax()), r.random_range(w.ymin()..w.ymax())])
        .collect();
    let pattern = PointPattern::new(pts, w).unwrap();
    let quad = build_quadrature(&pattern, r.random_range(16..48), r.random_range(16..48)).unwrap();
    (quad.weights().iter().sum::<f64>() - w.area()).abs() / w.area()
}

/// Relative error of the kernel-intensity integral against n for a pattern
/// whose points lie at least four bandwidths inside the window.
pub fn kernel_mass_error(seed: u64, bandwidth: f64) -> f64 {
    let mut r = rng(seed);
    let margin = 4.0 * bandwidth;
    let n = r.random_range(20..300);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|_| [r.random_range(margin..1.0 - margin), r.random_range(margin..1.0 - margin)])
        .collect();
    let pattern = PointPattern::new(pts, Window::unit_square()).unwrap();
    let k = kernel_intensity(&pattern, bandwidth, &unit_grid(128)).unwrap();
    (k.integral(0) / n as f64 - 1.0).abs()
}

pub struct TessellatedInstance {
    pub pattern: PointPattern,
    pub covariates: Vec<Covariate>,
    pub spec: TessellatedSpec,
}

pub fn tessellated_instance(seed: u64) -> TessellatedInstance {
    let mut r = rng(seed);
    let pattern = tilted_pattern(r.random_range(80..300), &mut r);
    let p_cov = r.random_range(0..=2);
    let covariates: Vec<Covariate> = (0..p_cov).map(|j| smooth_covariate(&format!("Z{j}"), &mut r)).collect();
    let spec = if r.random::<bool>() {
        TessellatedSpec::embedded(covariates.clone(), random_tessellation(&mut r))
    } else {
        let intercept = Some(random_tessellation(&mut r));
        let per_cov = (0..p_cov).map(|_| r.random::<bool>().then(|| random_tessellation(&mut r))).collect();
        TessellatedSpec::general(covariates.clone(), intercept, per_cov).unwrap()
    };
    TessellatedInstance {
        pattern,
        covariates,
        spec,
    }
}

fn global_fit(pattern: &PointPattern, covariates: &[Covariate]) -> tessreg::glm::FitResult {
    let quad = tessreg::glm::build_quadrature_auto(pattern, DUMMY_GRID).unwrap();
    fit_poisson_glm(&quad, &DesignMatrix::global(&quad, covariates).unwrap()).unwrap()
}

/// `loglik(global) - loglik(tessellated)`; must not exceed the slack.
pub fn loglik_excess_of_global(seed: u64) -> f64 {
    let inst = tessellated_instance(seed);
    let tess = fit_tessellated(&inst.pattern, &inst.spec, DUMMY_GRID).unwrap();
    global_fit(&inst.pattern, &inst.covariates).loglik - tess.loglik
}

/// Largest difference between a fit with single-tile tessellations everywhere
/// and the global fit (coefficients and log-likelihood).
pub fn single_tile_gap(seed: u64) -> f64 {
    let inst = tessellated_instance(seed);
    let one = Tessellation::single_tile(unit_grid(16));
    let spec = TessellatedSpec::general(
        inst.covariates.clone(),
        Some(one.clone()),
        vec![Some(one); inst.covariates.len()],
    )
    .unwrap();
    let tess = fit_tessellated(&inst.pattern, &spec, DUMMY_GRID).unwrap();
    let global = global_fit(&inst.pattern, &inst.covariates);
    assert_eq!(tess.columns, global.columns);
    tess.coefficients
        .iter()
        .zip(&global.coefficients)
        .map(|(a, b)| (a - b).abs())
        .fold((tess.loglik - global.loglik).abs(), f64::max)
}

/// Largest change of any coefficient surface when every reference tile moves
/// from the first to the last tile.
pub fn reference_change_gap(seed: u64) -> f64 {
    let inst = tessellated_instance(seed);
    let first = inst.spec.with_references(|_| 1).unwrap();
    let last = inst.spec.with_references(|t| t.q()).unwrap();
    let fit_a = fit_tessellated(&inst.pattern, &first, DUMMY_GRID).unwrap();
    let fit_b = fit_tessellated(&inst.pattern, &last, DUMMY_GRID).unwrap();
    let grid = unit_grid(16);
    let mut gap: f64 = 0.0;
    for block in first.blocks() {
        let a = coefficient_surface(&fit_a, &first, &block, &grid).unwrap();
        let b = coefficient_surface(&fit_b, &last, &block, &grid).unwrap();
        for (u, v) in a.band(0).iter().zip(b.band(0)) {
            gap = gap.max((u - v).abs());
        }
    }
    gap
}

/// Sup-norm gap between local maps at `h = 10` (window side 1) and the global fit.
pub fn huge_bandwidth_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let pattern = tilted_pattern(r.random_range(80..250), &mut r);
    let covariates: Vec<Covariate> = (0..r.random_range(0..=1))
        .map(|j| smooth_covariate(&format!("Z{j}"), &mut r))
        .collect();
    let model = LocalModel::new(&pattern, &covariates, LocalOptions::default()).unwrap();
    let maps = model.maps(&KernelSpec::new(10.0).unwrap(), &unit_grid(8)).unwrap();
    let global = &model.global_fit().coefficients;
    let mut gap: f64 = 0.0;
    for (j, g) in global.iter().enumerate() {
        for v in maps.maps.band(j) {
            gap = gap.max((v - g).abs());
        }
    }
    gap
}

// ---------------------------------------------------------------- LRT

/// `(statistic, p)` of a model tested against itself.
pub fn lrt_self(seed: u64) -> (f64, f64) {
    let inst = tessellated_instance(seed);
    let fit = fit_tessellated(&inst.pattern, &inst.spec, DUMMY_GRID).unwrap();
    let out = lrt(&fit, &fit).unwrap();
    (out.statistic, out.p_value)
}

/// Global vs known-diagonal tessellated fit on two-tile data whose log levels
/// differ by two; returns the LRT p-value.
pub fn lrt_gap_p_value(seed: u64, replicate: u64) -> f64 {
    let params = Parameters {
        beta0: 4.61,
        gamma0: Some(6.61),
        ..Parameters::default()
    };
    let mut spec = ScenarioSpec::new(Scenario::ConstantTiles, params);
    spec.coding = Coding::Levels;
    spec.seed = seed;
    let (real, pattern) = spec.simulate(replicate).unwrap();
    let global = TessellatedSpec::global(vec![]);
    let tess = TessellatedSpec::general(vec![], Some(real.tessellation.clone()), vec![]).unwrap();
    let null = fit_tessellated(&pattern, &global, DUMMY_GRID).unwrap();
    let alt = fit_tessellated(&pattern, &tess, DUMMY_GRID).unwrap();
    lrt(&null, &alt).unwrap().p_value
}

/// `|(AIC_null - AIC_alt) - (statistic - 2 df)|` for a nested pair.
pub fn aic_lrt_identity_gap(seed: u64) -> f64 {
    let inst = tessellated_instance(seed);
    let alt = fit_tessellated(&inst.pattern, &inst.spec, DUMMY_GRID).unwrap();
    let null = fit_tessellated(&inst.pattern, &TessellatedSpec::global(inst.covariates.clone()), DUMMY_GRID).unwrap();
    let t = lrt(&null, &alt).unwrap();
    let unclamped = 2.0 * (alt.loglik - null.loglik);
    assert!(unclamped >= 0.0 || t.statistic == 0.0);
    ((null.aic - alt.aic) - (t.statistic - 2.0 * t.df as f64)).abs()
}

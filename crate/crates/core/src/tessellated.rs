//! Tessellated Poisson models: covariate effects that are constant within
//! the tiles of one or more tessellations.
//!
//! The design holds an intercept, every covariate `Z_j`, one dummy per
//! non-reference tile of the intercept tessellation (`W[Intercept][k]`) and
//! one interaction per non-reference tile of each covariate's tessellation
//! (`Z_j:W[Z_j][k]`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Tessellation};
use crate::glm::{
    build_quadrature_auto, fit_poisson_glm, Covariate, DesignMatrix, FitResult, QuadratureScheme,
    INTERCEPT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TessellationMode {
    /// Each block has its own tessellation.
    #[default]
    General,
    /// One tessellation shared by the intercept and every covariate.
    Embedded,
}

#[derive(Debug, Clone)]
pub struct TessellatedSpec {
    pub covariates: Vec<Covariate>,
    pub intercept_tessellation: Option<Arc<Tessellation>>,
    /// One entry per covariate.
    pub covariate_tessellations: Vec<Option<Arc<Tessellation>>>,
    pub mode: TessellationMode,
}

/// `W[block][k]`.
pub fn dummy_name(block: &str, tile: u32) -> String {
    format!("W[{block}][{tile}]")
}

/// `Z:W[Z][k]`.
pub fn interaction_name(covariate: &str, tile: u32) -> String {
    format!("{covariate}:{}", dummy_name(covariate, tile))
}

impl TessellatedSpec {
    pub fn general(
        covariates: Vec<Covariate>,
        intercept_tessellation: Option<Tessellation>,
        covariate_tessellations: Vec<Option<Tessellation>>,
    ) -> Result<Self> {
        let spec = Self {
            covariates,
            intercept_tessellation: intercept_tessellation.map(Arc::new),
            covariate_tessellations: covariate_tessellations.into_iter().map(|t| t.map(Arc::new)).collect(),
            mode: TessellationMode::General,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every block uses `tessellation`.
    pub fn embedded(covariates: Vec<Covariate>, tessellation: Tessellation) -> Self {
        let shared = Arc::new(tessellation);
        Self {
            covariate_tessellations: vec![Some(shared.clone()); covariates.len()],
            covariates,
            intercept_tessellation: Some(shared),
            mode: TessellationMode::Embedded,
        }
    }

    /// No tessellation anywhere: the global model.
    pub fn global(covariates: Vec<Covariate>) -> Self {
        Self {
            covariate_tessellations: vec![None; covariates.len()],
            covariates,
            intercept_tessellation: None,
            mode: TessellationMode::General,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_tessellations.len() != self.covariates.len() {
            return Err(Error::InvalidArgument(format!(
                "{} covariate tessellations for {} covariates",
                self.covariate_tessellations.len(),
                self.covariates.len()
            )));
        }
        if self.mode == TessellationMode::Embedded {
            let shared = self
                .intercept_tessellation
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("embedded mode needs a tessellation".into()))?;
            if self
                .covariate_tessellations
                .iter()
                .any(|t| t.as_ref().is_none_or(|t| !Arc::ptr_eq(t, shared)))
            {
                return Err(Error::InvalidArgument(
                    "embedded mode requires one tessellation shared by every block".into(),
                ));
            }
        }
        Ok(())
    }

    /// Tessellation of a block (`Intercept` or a covariate name).
    pub fn tessellation_of(&self, block: &str) -> Result<Option<&Tessellation>> {
        if block == INTERCEPT {
            return Ok(self.intercept_tessellation.as_deref());
        }
        let j = self
            .covariates
            .iter()
            .position(|c| c.name == block)
            .ok_or_else(|| Error::UnknownName(block.to_string()))?;
        Ok(self.covariate_tessellations[j].as_deref())
    }

    /// Block names: `Intercept` then the covariates.
    pub fn blocks(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.covariates.iter().map(|c| c.name.clone()))
            .collect()
    }

    /// Returns the same spec with every tessellation's reference tile set by `choose`.
    pub fn with_references(&self, choose: impl Fn(&Tessellation) -> u32) -> Result<Self> {
        let reref = |t: &Arc<Tessellation>| -> Result<Arc<Tessellation>> {
            Ok(Arc::new((**t).clone().with_reference(choose(t))?))
        };
        match self.mode {
            TessellationMode::Embedded => {
                let t = self.intercept_tessellation.as_ref().expect("validated");
                Ok(Self::embedded(self.covariates.clone(), (*reref(t)?).clone()))
            }
            TessellationMode::General => Ok(Self {
                covariates: self.covariates.clone(),
                intercept_tessellation: self.intercept_tessellation.as_ref().map(reref).transpose()?,
                covariate_tessellations: self
                    .covariate_tessellations
                    .iter()
                    .map(|t| t.as_ref().map(reref).transpose())
                    .collect::<Result<_>>()?,
                mode: TessellationMode::General,
            }),
        }
    }
}

/// Tile of every quadrature point, failing on tiles without quadrature points.
fn memberships(quad: &QuadratureScheme, tess: &Tessellation, block: &str) -> Result<Vec<u32>> {
    let labels = quad
        .points()
        .iter()
        .map(|&[x, y]| tess.membership(x, y))
        .collect::<Result<Vec<u32>>>()?;
    let mut quad_count = vec![0usize; tess.q() as usize + 1];
    let mut data_count = vec![0usize; tess.q() as usize + 1];
    for (k, &l) in labels.iter().enumerate() {
        quad_count[l as usize] += 1;
        if quad.is_data(k) {
            data_count[l as usize] += 1;
        }
    }
    for tile in 1..=tess.q() {
        if quad_count[tile as usize] == 0 {
            return Err(Error::EmptyTile {
                block: block.to_string(),
                tile,
            });
        }
        if data_count[tile as usize] == 0 {
            log::warn!("tile {tile} of the {block} tessellation holds no data points");
        }
    }
    Ok(labels)
}

pub fn build_tessellated_design(quad: &QuadratureScheme, spec: &TessellatedSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let n = quad.len();
    let mut names = vec![INTERCEPT.to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut z_values = Vec::with_capacity(spec.covariates.len());
    for c in &spec.covariates {
        let values = quad
            .points()
            .iter()
            .map(|&[x, y]| c.value_at(x, y))
            .collect::<Result<Vec<f64>>>()?;
        names.push(c.name.clone());
        columns.push(values.clone());
        z_values.push(values);
    }
    if let Some(t) = spec.intercept_tessellation.as_deref() {
        let labels = memberships(quad, t, INTERCEPT)?;
        for k in t.dummy_tiles() {
            names.push(dummy_name(INTERCEPT, k));
            columns.push(labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect());
        }
    }
    for (j, c) in spec.covariates.iter().enumerate() {
        if let Some(t) = spec.covariate_tessellations[j].as_deref() {
            let labels = memberships(quad, t, &c.name)?;
            for k in t.dummy_tiles() {
                names.push(interaction_name(&c.name, k));
                columns.push(
                    labels
                        .iter()
                        .zip(&z_values[j])
                        .map(|(&l, &z)| if l == k { z } else { 0.0 })
                        .collect(),
                );
            }
        }
    }
    let p = names.len();
    let mut values = Vec::with_capacity(n * p);
    for i in 0..n {
        for col in &columns {
            values.push(col[i]);
        }
    }
    DesignMatrix::new(names, values, n)
}

/// Fits the tessellated model on an automatically refined `dummy_grid` quadrature.
pub fn fit_tessellated(pattern: &PointPattern, spec: &TessellatedSpec, dummy_grid: usize) -> Result<FitResult> {
    let quad = build_quadrature_auto(pattern, dummy_grid)?;
    fit_tessellated_on(&quad, spec)
}

pub fn fit_tessellated_on(quad: &QuadratureScheme, spec: &TessellatedSpec) -> Result<FitResult> {
    let design = build_tessellated_design(quad, spec)?;
    fit_poisson_glm(quad, &design)
}

fn coef(fit: &FitResult, name: &str) -> Result<f64> {
    fit.coefficient(name).ok_or_else(|| Error::UnknownName(name.to_string()))
}

/// Total coefficient of `block` in each tile: index `k - 1` holds tile `k`.
pub fn tile_coefficients(fit: &FitResult, spec: &TessellatedSpec, block: &str) -> Result<Vec<f64>> {
    let base = coef(fit, block)?;
    match spec.tessellation_of(block)? {
        None => Ok(vec![base]),
        Some(t) => (1..=t.q())
            .map(|k| {
                if k == t.reference_tile() {
                    Ok(base)
                } else if block == INTERCEPT {
                    Ok(base + coef(fit, &dummy_name(INTERCEPT, k))?)
                } else {
                    Ok(base + coef(fit, &interaction_name(block, k))?)
                }
            })
            .collect(),
    }
}

/// Raster of the total effect of `block` at each pixel center of `grid`.
pub fn coefficient_surface(
    fit: &FitResult,
    spec: &TessellatedSpec,
    block: &str,
    grid: &Grid,
) -> Result<SpatialRaster> {
    if !fit.converged {
        return Err(Error::NotConverged("coefficient surfaces need a converged fit".into()));
    }
    let levels = tile_coefficients(fit, spec, block)?;
    let tess = spec.tessellation_of(block)?;
    let values = grid
        .centers()
        .map(|[x, y]| match tess {
            None => levels[0],
            Some(t) => t.membership(x, y).map_or(f64::NAN, |k| levels[k as usize - 1]),
        })
        .collect();
    SpatialRaster::single(*grid, values)
}

/// Fitted intensity `exp(sum_j surface_j(u) Z_j(u))` at the pixel centers of `grid`.
pub fn fitted_intensity(fit: &FitResult, spec: &TessellatedSpec, grid: &Grid) -> Result<SpatialRaster> {
    let mut eta = coefficient_surface(fit, spec, INTERCEPT, grid)?.into_bands().remove(0);
    for c in &spec.covariates {
        let surface = coefficient_surface(fit, spec, &c.name, grid)?;
        for (i, [x, y]) in grid.centers().enumerate() {
            let z = c.value_at(x, y).unwrap_or(f64::NAN);
            eta[i] += surface.band(0)[i] * z;
        }
    }
    SpatialRaster::single(*grid, eta.into_iter().map(f64::exp).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::glm::build_quadrature;
    use crate::rng::{self, Purpose};
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> PointPattern {
        let mut r = rng::stream(seed, 0, Purpose::Generic);
        let pts = (0..n).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
        PointPattern::new(pts, Window::unit_square()).unwrap()
    }

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, Window::unit_square()).unwrap()
    }

    #[test]
    fn intercept_tessellation_adds_one_dummy() {
        let q = build_quadrature(&uniform(50, 1), 16, 16).unwrap();
        let spec = TessellatedSpec::general(vec![], Some(Tessellation::diagonal(grid(32))), vec![]).unwrap();
        let d = build_tessellated_design(&q, &spec).unwrap();
        assert_eq!(d.names(), &["Intercept".to_string(), "W[Intercept][1]".to_string()]);
    }

    #[test]
    fn bronze_shaped_design_has_seven_columns() {
        let g = grid(20);
        let q = build_quadrature(&uniform(200, 2), 20, 20).unwrap();
        let z = Covariate::new("Long", SpatialRaster::from_fn(g, |x, _| x));
        let five = Tessellation::from_fn(g, |_, y| 1 + (y * 5.0).floor().min(4.0) as u32).unwrap();
        let spec = TessellatedSpec::general(vec![z], Some(Tessellation::diagonal(g)), vec![Some(five)]).unwrap();
        let d = build_tessellated_design(&q, &spec).unwrap();
        assert_eq!(d.n_cols(), 7);
        assert!(d.names().contains(&"Long:W[Long][5]".to_string()));
    }

    #[test]
    fn single_tile_spec_is_the_global_model() {
        let g = grid(16);
        let pattern = uniform(120, 3);
        let z = Covariate::new("z", SpatialRaster::from_fn(g, |x, y| x * y));
        let single = Tessellation::single_tile(g);
        let spec = TessellatedSpec::general(vec![z.clone()], Some(single.clone()), vec![Some(single)]).unwrap();
        let q = build_quadrature(&pattern, 16, 16).unwrap();
        let tess_design = build_tessellated_design(&q, &spec).unwrap();
        let global = DesignMatrix::global(&q, &[z]).unwrap();
        assert_eq!(tess_design, global);
        let fit = fit_tessellated_on(&q, &TessellatedSpec::global(vec![])).unwrap();
        assert!((fit.coefficients[0] - 120f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn tile_without_quadrature_points_is_an_error() {
        // tile 2 is a single thin column of pixels between dummy centers
        let g = grid(64);
        let t = Tessellation::from_fn(g, |x, _| if (0.0..1.0 / 64.0).contains(&x) { 2 } else { 1 }).unwrap();
        let pattern = PointPattern::new(vec![[0.5, 0.5]], Window::unit_square()).unwrap();
        let q = build_quadrature(&pattern, 16, 16).unwrap();
        let spec = TessellatedSpec::general(vec![], Some(t), vec![]).unwrap();
        assert!(matches!(
            build_tessellated_design(&q, &spec),
            Err(Error::EmptyTile { tile: 2, .. })
        ));
    }

    #[test]
    fn embedded_mode_shares_one_tessellation() {
        let g = grid(8);
        let z = Covariate::new("z", SpatialRaster::from_fn(g, |x, _| x));
        let spec = TessellatedSpec::embedded(vec![z.clone()], Tessellation::diagonal(g));
        spec.validate().unwrap();
        let mut broken = spec.clone();
        broken.covariate_tessellations = vec![Some(Arc::new(Tessellation::diagonal(g)))];
        assert!(broken.validate().is_err());
        assert!(matches!(spec.tessellation_of("nope"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn surface_levels_follow_tiles() {
        let g = grid(32);
        let spec = TessellatedSpec::general(vec![], Some(Tessellation::diagonal(g)), vec![]).unwrap();
        let fit = fit_tessellated(&uniform(300, 4), &spec, 32).unwrap();
        let surface = coefficient_surface(&fit, &spec, INTERCEPT, &g).unwrap();
        let b0 = fit.coefficient("Intercept").unwrap();
        let g1 = fit.coefficient("W[Intercept][1]").unwrap();
        for (i, [x, y]) in g.centers().enumerate() {
            let expected = if x > y { b0 + g1 } else { b0 };
            assert_eq!(surface.band(0)[i], expected);
        }
        assert!(coefficient_surface(&fit, &spec, "missing", &g).is_err());
    }
}

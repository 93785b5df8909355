//! Tessellation identification from local coefficient maps: SLIC
//! superpixels, Ward clustering of superpixel means and a silhouette cut.

pub mod cluster;
pub mod connectivity;
pub mod slic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SpatialRaster, Tessellation};

pub use cluster::{
    cluster_superpixels, cluster_values, silhouette, ClusterParams, Clustering, TileIdentification,
};
pub use connectivity::enforce_connectivity;
pub use slic::{slic, slic_assign, SlicParams, SlicRun, SuperpixelMap};

/// Pixel agreement an identified two-tile split needs to count as correct.
pub const IDENTIFICATION_AGREEMENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationMode {
    /// One tessellation per coefficient band.
    #[default]
    PerCovariate,
    /// A single tessellation from all bands jointly.
    Common,
}

/// SLIC and clustering settings; `slic: None` picks the size-based default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SegmentationParams {
    #[serde(default)]
    pub slic: Option<SlicParams>,
    #[serde(default)]
    pub cluster: ClusterParams,
}

impl SegmentationParams {
    pub fn slic_for(&self, pixels: usize) -> SlicParams {
        self.slic.unwrap_or_else(|| SlicParams::default_for(pixels))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Bands the tessellation was derived from.
    pub bands: Vec<usize>,
    pub slic: SlicParams,
    pub superpixels: SuperpixelMap,
    pub tiles: TileIdentification,
}

impl Segmentation {
    pub fn tessellation(&self) -> &Tessellation {
        &self.tiles.tessellation
    }
}

/// Segments the bands of `maps` either one at a time or jointly.
///
/// `params` holds one entry per band, or a single entry used for every band.
pub fn identify_tessellations(
    maps: &SpatialRaster,
    params: &[SegmentationParams],
    mode: SegmentationMode,
) -> Result<Vec<Segmentation>> {
    let n_bands = maps.n_bands();
    if params.is_empty() || (params.len() != 1 && params.len() != n_bands) {
        return Err(Error::InvalidArgument(format!(
            "{} segmentation parameter sets for {n_bands} bands",
            params.len()
        )));
    }
    let groups: Vec<Vec<usize>> = match mode {
        SegmentationMode::PerCovariate => (0..n_bands).map(|b| vec![b]).collect(),
        SegmentationMode::Common => vec![(0..n_bands).collect()],
    };
    groups
        .into_iter()
        .map(|bands| {
            let p = params[if params.len() == 1 { 0 } else { bands[0] }];
            let raster = SpatialRaster::new(
                *maps.grid(),
                bands.iter().map(|&b| maps.band(b).to_vec()).collect(),
            )?;
            let pixels = raster.grid().len();
            let slic_params = p.slic_for(pixels);
            let superpixels = slic(&raster, &slic_params)?;
            let tiles = cluster_superpixels(&superpixels, &p.cluster)?;
            Ok(Segmentation {
                bands,
                slic: slic_params,
                superpixels,
                tiles,
            })
        })
        .collect()
}

/// Replaces NaN pixels of every band by that band's smallest finite value.
///
/// Local fits are NaN where the kernel sees no data, i.e. where the local
/// intensity estimate vanishes, so the lowest observed level is the closest
/// finite stand-in. Bands without finite values are left unchanged.
pub fn fill_unsupported(maps: &SpatialRaster) -> Result<SpatialRaster> {
    let bands = maps
        .bands()
        .iter()
        .map(|band| {
            let min = band.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                band.iter().map(|&v| if v.is_finite() { v } else { min }).collect()
            } else {
                band.clone()
            }
        })
        .collect();
    SpatialRaster::new(*maps.grid(), bands)
}

/// Fraction of `truth`'s unmasked pixels whose tile matches `found` (looked up
/// at the pixel centers), maximized over relabelings of `found`.
pub fn agreement(found: &Tessellation, truth: &Tessellation) -> Result<f64> {
    let qf = found.q() as usize;
    let qt = truth.q() as usize;
    if qf > 8 || qt > 8 {
        return Err(Error::InvalidArgument("agreement supports at most 8 tiles".into()));
    }
    let mut confusion = vec![vec![0usize; qt + 1]; qf + 1];
    let mut total = 0usize;
    for (i, &t) in truth.labels().iter().enumerate() {
        if t == 0 {
            continue;
        }
        let [x, y] = truth.grid().center_of(i);
        let f = found.membership(x, y).unwrap_or(0);
        confusion[f as usize][t as usize] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::InvalidArgument("truth has no unmasked pixels".into()));
    }
    // best injective matching of found tiles onto truth tiles
    fn best(confusion: &[Vec<usize>], f: usize, used: &mut Vec<bool>) -> usize {
        if f >= confusion.len() {
            return 0;
        }
        let mut out = best(confusion, f + 1, used);
        for t in 1..used.len() {
            if !used[t] {
                used[t] = true;
                out = out.max(confusion[f][t] + best(confusion, f + 1, used));
                used[t] = false;
            }
        }
        out
    }
    let mut used = vec![false; qt + 1];
    let matched = best(&confusion[1..], 0, &mut used);
    Ok(matched as f64 / total as f64)
}

/// Two tiles found and at least 90% pixel agreement with the truth.
pub fn identifies(found: &Tessellation, truth: &Tessellation) -> Result<bool> {
    Ok(found.q() == truth.q() && agreement(found, truth)? >= IDENTIFICATION_AGREEMENT)
}

//! Observation windows, point patterns, rasters and tessellations.
//!
//! Every raster-like object shares a [`Grid`]: a rectangular window split
//! into `nx * ny` pixels, stored row-major with row 0 at the minimum `y`.
//! Pixel lookup is piecewise constant and cells are half-open, so a location
//! exactly on a pixel edge belongs to the pixel with the larger index. The
//! upper window edges are folded into the last column/row.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Window {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Window {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let finite = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite());
        if !finite || xmax <= xmin || ymax <= ymin {
            return Err(Error::InvalidWindow(format!(
                "[{xmin}, {xmax}] x [{ymin}, {ymax}] must be finite with xmax > xmin and ymax > ymin"
            )));
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub fn unit_square() -> Self {
        Self {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        }
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }
    pub fn xmax(&self) -> f64 {
        self.xmax
    }
    pub fn ymin(&self) -> f64 {
        self.ymin
    }
    pub fn ymax(&self) -> f64 {
        self.ymax
    }
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }
    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn shorter_side(&self) -> f64 {
        self.width().min(self.height())
    }

    /// Closed-boundary containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            xmin: self.xmin + dx,
            xmax: self.xmax + dx,
            ymin: self.ymin + dy,
            ymax: self.ymax + dy,
        }
    }
}

impl TryFrom<[f64; 4]> for Window {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Window::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Window> for [f64; 4] {
    fn from(w: Window) -> Self {
        [w.xmin, w.xmax, w.ymin, w.ymax]
    }
}

/// Pixel lattice over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    window: Window,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, window: Window) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny, window })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn pixel_width(&self) -> f64 {
        self.window.width() / self.nx as f64
    }
    pub fn pixel_height(&self) -> f64 {
        self.window.height() / self.ny as f64
    }
    pub fn pixel_area(&self) -> f64 {
        self.pixel_width() * self.pixel_height()
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.nx + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    /// Column and row of the pixel containing `(x, y)`.
    pub fn cell_of(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        if !self.window.contains(x, y) {
            return Err(Error::OutOfWindow { x, y });
        }
        let col = ((x - self.window.xmin) / self.pixel_width()).floor() as usize;
        let row = ((y - self.window.ymin) / self.pixel_height()).floor() as usize;
        Ok((col.min(self.nx - 1), row.min(self.ny - 1)))
    }

    pub fn index_of(&self, x: f64, y: f64) -> Result<usize> {
        let (c, r) = self.cell_of(x, y)?;
        Ok(self.index(c, r))
    }

    pub fn center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.window.xmin + (col as f64 + 0.5) * self.pixel_width(),
            self.window.ymin + (row as f64 + 0.5) * self.pixel_height(),
        ]
    }

    pub fn center_of(&self, index: usize) -> [f64; 2] {
        let (c, r) = self.col_row(index);
        self.center(c, r)
    }

    /// Pixel centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |i| self.center_of(i))
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!(
                "{}x{} over {:?} vs {}x{} over {:?}",
                self.nx, self.ny, self.window, other.nx, other.ny, other.window
            )));
        }
        Ok(())
    }
}

/// A simple planar point pattern observed in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<[f64; 2]>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<[f64; 2]>, window: Window) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for &[x, y] in &points {
            if !window.contains(x, y) {
                return Err(Error::OutOfWindow { x, y });
            }
            // +0.0 and -0.0 are the same location.
            let key = ((x + 0.0).to_bits(), (y + 0.0).to_bits());
            if !seen.insert(key) {
                return Err(Error::DuplicatePoint { x, y });
            }
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self {
            points: Vec::new(),
            window,
        }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
            window: self.window.translate(dx, dy),
        }
    }
}

/// Gridded real-valued field with one or more co-registered bands.
/// `NaN` marks masked pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRaster {
    grid: Grid,
    bands: Vec<Vec<f64>>,
}

impl SpatialRaster {
    pub fn new(grid: Grid, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidArgument("raster needs at least one band".into()));
        }
        if let Some(b) = bands.iter().find(|b| b.len() != grid.len()) {
            return Err(Error::GeometryMismatch(format!(
                "band of length {} on a {}x{} grid",
                b.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(Self { grid, bands })
    }

    pub fn single(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![values])
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            bands: vec![vec![value; grid.len()]],
        }
    }

    /// Single-band raster sampled at pixel centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.centers().map(|[x, y]| f(x, y)).collect();
        Self {
            grid,
            bands: vec![values],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn window(&self) -> &Window {
        self.grid.window()
    }
    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }
    pub fn band(&self, band: usize) -> &[f64] {
        &self.bands[band]
    }
    pub fn bands(&self) -> &[Vec<f64>] {
        &self.bands
    }
    pub fn into_bands(self) -> Vec<Vec<f64>> {
        self.bands
    }

    /// Single-band raster holding a copy of `band`.
    pub fn extract_band(&self, band: usize) -> SpatialRaster {
        Self {
            grid: self.grid,
            bands: vec![self.bands[band].clone()],
        }
    }

    /// Piecewise-constant lookup of the pixel containing `(x, y)`.
    pub fn value_at(&self, x: f64, y: f64, band: usize) -> Result<f64> {
        if band >= self.bands.len() {
            return Err(Error::InvalidArgument(format!(
                "band {band} requested from a {}-band raster",
                self.bands.len()
            )));
        }
        let (col, row) = self.grid.cell_of(x, y)?;
        let v = self.bands[band][self.grid.index(col, row)];
        if v.is_nan() {
            return Err(Error::MaskedValue { col, row });
        }
        Ok(v)
    }

    /// True if any band is NaN at the pixel.
    pub fn is_masked(&self, index: usize) -> bool {
        self.bands.iter().any(|b| b[index].is_nan())
    }

    /// Riemann integral of a band over unmasked pixels.
    pub fn integral(&self, band: usize) -> f64 {
        let sum: f64 = self.bands[band].iter().filter(|v| !v.is_nan()).sum();
        sum * self.grid.pixel_area()
    }

    /// Nearest-pixel resampling of every band onto `target`.
    pub fn resample(&self, target: &Grid) -> Result<SpatialRaster> {
        let bands = self
            .bands
            .iter()
            .map(|b| {
                target
                    .centers()
                    .map(|[x, y]| self.grid.index_of(x, y).map(|i| b[i]).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        SpatialRaster::new(*target, bands)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialRaster {
        Self {
            grid: self.grid,
            bands: self
                .bands
                .iter()
                .map(|b| b.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }
}

/// Partition of a grid into tiles labelled `1..=q`; label 0 marks masked
/// pixels outside the analysed region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    grid: Grid,
    labels: Vec<u32>,
    q: u32,
    reference_tile: u32,
}

impl Tessellation {
    /// Builds a tessellation whose reference tile is the one with the most
    /// pixels (lowest label on ties).
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!(
                "{} labels for a {}-pixel grid",
                labels.len(),
                grid.len()
            )));
        }
        let q = labels.iter().copied().max().unwrap_or(0);
        if q == 0 {
            return Err(Error::InvalidTessellation("no labelled pixels".into()));
        }
        let mut counts = vec![0usize; q as usize + 1];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        if let Some(k) = (1..=q).find(|&k| counts[k as usize] == 0) {
            return Err(Error::InvalidTessellation(format!(
                "labels must cover 1..={q}; tile {k} is empty"
            )));
        }
        let reference_tile = (1..=q)
            .max_by(|&a, &b| counts[a as usize].cmp(&counts[b as usize]).then(b.cmp(&a)))
            .unwrap_or(1);
        Ok(Self {
            grid,
            labels,
            q,
            reference_tile,
        })
    }

    pub fn single_tile(grid: Grid) -> Self {
        Self {
            grid,
            labels: vec![1; grid.len()],
            q: 1,
            reference_tile: 1,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> u32) -> Result<Self> {
        let labels = grid.centers().map(|[x, y]| f(x, y)).collect();
        Self::new(grid, labels)
    }

    /// Two tiles split along the diagonal: label 1 where `x > y`, else 2.
    pub fn diagonal(grid: Grid) -> Self {
        Self::from_fn(grid, |x, y| if x > y { 1 } else { 2 })
            .expect("a diagonal split of a square grid has two non-empty tiles")
    }

    pub fn with_reference(mut self, tile: u32) -> Result<Self> {
        if tile == 0 || tile > self.q {
            return Err(Error::InvalidTessellation(format!(
                "reference tile {tile} outside 1..={}",
                self.q
            )));
        }
        self.reference_tile = tile;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn reference_tile(&self) -> u32 {
        self.reference_tile
    }

    /// Pixel count per label; index 0 counts masked pixels.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.q as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Labels that get a dummy column, ascending.
    pub fn dummy_tiles(&self) -> Vec<u32> {
        (1..=self.q).filter(|&k| k != self.reference_tile).collect()
    }

    /// Label of the tile containing `(x, y)`.
    pub fn membership(&self, x: f64, y: f64) -> Result<u32> {
        let (col, row) = self.grid.cell_of(x, y)?;
        match self.labels[self.grid.index(col, row)] {
            0 => Err(Error::MaskedValue { col, row }),
            l => Ok(l),
        }
    }

    /// Dummy encoding aligned with [`Tessellation::dummy_tiles`].
    pub fn dummies(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        let label = self.membership(x, y)?;
        Ok(self
            .dummy_tiles()
            .into_iter()
            .map(|k| if k == label { 1.0 } else { 0.0 })
            .collect())
    }
}

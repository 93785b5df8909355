//! Text formats: point-pattern CSV and the plain raster format.
//!
//! Raster files start with `nx ny xmin xmax ymin ymax` followed by `ny`
//! lines of `nx` space-separated values, first line = row 0 = minimum y.
//! `NA` marks masked pixels. Values are written with Rust's shortest
//! round-trip formatting so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Grid, PointPattern, SpatialRaster, Tessellation, Window};

pub fn pattern_to_csv(pattern: &PointPattern) -> String {
    let mut out = String::with_capacity(16 + pattern.len() * 24);
    out.push_str("x,y\n");
    for [x, y] in pattern.points() {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn pattern_from_csv(text: &str, window: Window) -> Result<PointPattern> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) => {
            let cols: Vec<_> = header.split(',').map(|c| c.trim().trim_matches('"')).collect();
            if cols != ["x", "y"] {
                return Err(Error::parse("line 1", format!("expected header `x,y`, got `{header}`")));
            }
        }
        None => return Err(Error::parse("line 1", "missing header `x,y`")),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split(',').map(str::trim);
        let mut next = |what: &str| -> Result<f64> {
            let field = fields
                .next()
                .ok_or_else(|| Error::parse(format!("line {}", i + 1), format!("missing {what}")))?;
            field
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("line {}", i + 1), format!("{what} `{field}`: {e}")))
        };
        let x = next("x")?;
        let y = next("y")?;
        points.push([x, y]);
    }
    PointPattern::new(points, window)
}

pub fn read_pattern(path: &Path, window: Window) -> Result<PointPattern> {
    pattern_from_csv(&fs::read_to_string(path)?, window)
}

pub fn write_pattern(path: &Path, pattern: &PointPattern) -> Result<()> {
    fs::write(path, pattern_to_csv(pattern))?;
    Ok(())
}

fn header(grid: &Grid) -> String {
    let w = grid.window();
    format!(
        "{} {} {} {} {} {}\n",
        grid.nx(),
        grid.ny(),
        w.xmin(),
        w.xmax(),
        w.ymin(),
        w.ymax()
    )
}

fn write_values<T: Copy>(grid: &Grid, values: &[T], fmt: impl Fn(T) -> Option<String>) -> String {
    let mut out = header(grid);
    for row in values.chunks(grid.nx()) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| fmt(v).unwrap_or_else(|| "NA".to_string()))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Serializes one band of a raster.
pub fn raster_band_to_text(raster: &SpatialRaster, band: usize) -> String {
    write_values(raster.grid(), raster.band(band), |v: f64| {
        (!v.is_nan()).then(|| format!("{v}"))
    })
}

pub fn tessellation_to_text(tess: &Tessellation) -> String {
    write_values(tess.grid(), tess.labels(), |v: u32| (v != 0).then(|| v.to_string()))
}

fn parse_grid_and_values(text: &str) -> Result<(Grid, Vec<Option<f64>>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::parse("line 1", "empty raster file"))?;
    let parts: Vec<&str> = head.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(Error::parse("line 1", "expected `nx ny xmin xmax ymin ymax`"));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse("line 1", format!("grid size `{s}`: {e}")))
    };
    let coord = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::parse("line 1", format!("coordinate `{s}`: {e}")))
    };
    let (nx, ny) = (dim(parts[0])?, dim(parts[1])?);
    let window = Window::new(coord(parts[2])?, coord(parts[3])?, coord(parts[4])?, coord(parts[5])?)?;
    let grid = Grid::new(nx, ny, window)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (i, line) in lines {
        let before = values.len();
        for tok in line.split_whitespace() {
            if tok == "NA" {
                values.push(None);
            } else {
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("line {}", i + 1), format!("`{tok}`: {e}")))?;
                values.push(Some(v));
            }
        }
        if values.len() - before != nx {
            return Err(Error::parse(
                format!("line {}", i + 1),
                format!("expected {nx} values, found {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != ny {
        return Err(Error::parse("raster body", format!("expected {ny} rows, found {rows}")));
    }
    Ok((grid, values))
}

pub fn raster_from_text(text: &str) -> Result<SpatialRaster> {
    let (grid, values) = parse_grid_and_values(text)?;
    SpatialRaster::single(grid, values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

pub fn tessellation_from_text(text: &str) -> Result<Tessellation> {
    let (grid, values) = parse_grid_and_values(text)?;
    let labels = values
        .into_iter()
        .map(|v| match v {
            None => Ok(0),
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as u32),
            Some(v) => Err(Error::parse("tessellation", format!("label {v} is not a tile index"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Tessellation::new(grid, labels)
}

pub fn read_raster(path: &Path) -> Result<SpatialRaster> {
    raster_from_text(&fs::read_to_string(path)?)
}

pub fn write_raster_band(path: &Path, raster: &SpatialRaster, band: usize) -> Result<()> {
    fs::write(path, raster_band_to_text(raster, band))?;
    Ok(())
}

pub fn read_tessellation(path: &Path) -> Result<Tessellation> {
    tessellation_from_text(&fs::read_to_string(path)?)
}

pub fn write_tessellation(path: &Path, tess: &Tessellation) -> Result<()> {
    fs::write(path, tessellation_to_text(tess))?;
    Ok(())
}

/// Minimal CSV writer for numeric report tables.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

//! PNG heatmaps of raster bands with a diverging palette and a legend strip.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use tessreg::{SpatialRaster, Tessellation};

const LOW: [f64; 3] = [33.0, 102.0, 172.0];
const MID: [f64; 3] = [247.0, 247.0, 247.0];
const HIGH: [f64; 3] = [178.0, 24.0, 43.0];
const MASKED: [u8; 3] = [160, 160, 160];
const LEGEND_HEIGHT: usize = 12;
const LEGEND_GAP: usize = 2;
const MIN_SIDE: usize = 256;

/// Colour of `t` in `[0, 1]`; 0.5 is the neutral midpoint.
pub fn palette(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (a, b, s) = if t < 0.5 { (LOW, MID, t * 2.0) } else { (MID, HIGH, (t - 0.5) * 2.0) };
    [0, 1, 2].map(|i| (a[i] + (b[i] - a[i]) * s).round() as u8)
}

/// Colour scale limits: symmetric about zero when the values straddle it.
pub fn limits(values: &[f64]) -> (f64, f64) {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo < 0.0 && hi > 0.0 {
        let m = lo.abs().max(hi);
        (-m, m)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Writes band `band` of `raster`; north is up.
pub fn write_band(path: &Path, raster: &SpatialRaster, band: usize) -> Result<()> {
    let grid = raster.grid();
    write_values(path, grid.nx(), grid.ny(), raster.band(band))
}

pub fn write_tessellation(path: &Path, tess: &Tessellation) -> Result<()> {
    let grid = tess.grid();
    let values: Vec<f64> = tess
        .labels()
        .iter()
        .map(|&l| if l == 0 { f64::NAN } else { l as f64 })
        .collect();
    write_values(path, grid.nx(), grid.ny(), &values)
}

fn write_values(path: &Path, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    let scale = (MIN_SIDE / nx.max(ny)).max(1);
    let width = nx * scale;
    let map_height = ny * scale;
    let height = map_height + LEGEND_GAP + LEGEND_HEIGHT;
    let (lo, hi) = limits(values);
    let colour = |v: f64| if v.is_finite() { palette((v - lo) / (hi - lo)) } else { MASKED };

    let mut pixels = vec![255u8; width * height * 3];
    for py in 0..map_height {
        let row = ny - 1 - py / scale;
        for px in 0..width {
            let c = colour(values[row * nx + px / scale]);
            pixels[(py * width + px) * 3..][..3].copy_from_slice(&c);
        }
    }
    for py in map_height + LEGEND_GAP..height {
        for px in 0..width {
            let c = palette(px as f64 / (width - 1).max(1) as f64);
            pixels[(py * width + px) * 3..][..3].copy_from_slice(&c);
        }
    }

    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.add_text_chunk("legend".into(), format!("min={lo} max={hi}"))?;
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints_and_midpoint() {
        assert_eq!(palette(0.0), [33, 102, 172]);
        assert_eq!(palette(0.5), [247, 247, 247]);
        assert_eq!(palette(1.0), [178, 24, 43]);
        assert_eq!(palette(-3.0), palette(0.0));
    }

    #[test]
    fn limits_are_symmetric_across_zero() {
        assert_eq!(limits(&[-1.0, 3.0, f64::NAN]), (-3.0, 3.0));
        assert_eq!(limits(&[1.0, 3.0]), (1.0, 3.0));
        assert_eq!(limits(&[2.0, 2.0]), (1.5, 2.5));
        assert_eq!(limits(&[f64::NAN]), (0.0, 1.0));
    }
}

//! Binary PPM (P6) heatmaps.
//!
//! Colormap: piecewise linear through blue `(0, 0, 255)` at `t = 0`, white
//! at `t = 0.5` and red `(255, 0, 0)` at `t = 1`, where
//! `t = (v - min) / (max - min)`. A constant field maps to `t = 0.5`.
//! Channels are rounded to the nearest integer.

use lamp_core::{MaskSpec, PatchGrid, SnapshotSet};

use crate::error::{CliError, CliResult};

pub const OUTLINE: [u8; 3] = [0, 0, 0];

pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.5 } else { t.clamp(0.0, 1.0) };
    let ramp = |x: f64| (255.0 * x).round() as u8;
    if t <= 0.5 {
        let w = ramp(2.0 * t);
        [w, w, 255]
    } else {
        let w = ramp(2.0 - 2.0 * t);
        [255, w, w]
    }
}

/// Row-major RGB raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Image { width, height, pixels: vec![color; width * height] }
    }

    /// Heatmap of row-major `values` over the range `[lo, hi]`.
    pub fn heatmap(width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Self {
        let span = hi - lo;
        let pixels =
            values.iter().map(|&v| if span > 0.0 { colormap((v - lo) / span) } else { colormap(0.5) }).collect();
        Image { width, height, pixels }
    }

    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        self.pixels[y * self.width + x] = color;
    }

    /// One-pixel border along the inside edge of every masked patch.
    pub fn outline_masked(&mut self, grid: &PatchGrid, mask: &MaskSpec) {
        let p = grid.patch_size();
        for n in (0..grid.n_patches()).filter(|&n| !mask.is_unmasked(n)) {
            let (y0, x0) = grid.origin(n);
            for i in 0..p {
                self.set(x0 + i, y0, OUTLINE);
                self.set(x0 + i, y0 + p - 1, OUTLINE);
                self.set(x0, y0 + i, OUTLINE);
                self.set(x0 + p - 1, y0 + i, OUTLINE);
            }
        }
    }

    /// Places panels left to right, separated by one black column.
    pub fn side_by_side(panels: &[Image]) -> Self {
        let height = panels.iter().map(|p| p.height).max().unwrap_or(0);
        let width = panels.iter().map(|p| p.width).sum::<usize>() + panels.len().saturating_sub(1);
        let mut out = Image::filled(width, height, OUTLINE);
        let mut x0 = 0;
        for panel in panels {
            for y in 0..panel.height {
                for x in 0..panel.width {
                    out.set(x0 + x, y, panel.pixels[y * panel.width + x]);
                }
            }
            x0 += panel.width + 1;
        }
        out
    }

    /// Nearest-neighbour upscale by an integer factor.
    pub fn scaled(&self, factor: usize) -> Self {
        let (w, h) = (self.width * factor, self.height * factor);
        let pixels = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| self.pixels[(y / factor) * self.width + x / factor])
            .collect();
        Image { width: w, height: h, pixels }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }
}

/// Values of one component of one snapshot, row-major.
pub fn component_plane(field: &SnapshotSet, snapshot: usize, component: usize) -> CliResult<Vec<f64>> {
    if snapshot >= field.len() {
        return Err(CliError::usage(format!("snapshot {snapshot} out of range (test block has {})", field.len())));
    }
    if component >= field.components() {
        return Err(CliError::usage(format!("component {component} out of range (field has {})", field.components())));
    }
    let c = field.components();
    Ok(field.snapshot(snapshot).iter().skip(component).step_by(c).copied().collect())
}

pub fn range(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

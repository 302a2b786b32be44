//! Time-in-cell position heatmaps and the distances between them.

use super::{transport_cost, EvalError};
use crate::formats::TickRecord;
use crate::world::{Rect, Team};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Cells along the longer map side with the default cell size.
pub const DEFAULT_GRID: usize = 32;

/// Row-major grid (`y * width + x`) of time fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Metres per cell side.
    pub cell_size: f64,
    /// Map-frame corner of cell (0, 0).
    pub origin: [f64; 2],
    pub cells: Vec<f64>,
    /// Samples outside the map bounds that were clamped to the border.
    pub clamped: usize,
}

impl Heatmap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.cells[y * self.width + x]
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    fn same_shape(&self, other: &Heatmap) -> Result<(), EvalError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(EvalError::ShapeMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    /// Builds a normalized heatmap from raw per-cell counts.
    pub fn from_counts(width: usize, height: usize, cell_size: f64, origin: [f64; 2], counts: &[f64]) -> Result<Self, EvalError> {
        assert_eq!(counts.len(), width * height);
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(EvalError::Empty("heatmap"));
        }
        Ok(Heatmap { width, height, cell_size, origin, cells: counts.iter().map(|c| c / total).collect(), clamped: 0 })
    }
}

/// Cell size giving [`DEFAULT_GRID`] cells along the longer side of `bounds`.
pub fn default_cell_size(bounds: &Rect) -> f64 {
    bounds.width().max(bounds.height()) / DEFAULT_GRID as f64
}

fn cells_along(extent: f64, cell_size: f64) -> usize {
    ((extent / cell_size) - 1e-9).ceil().max(1.0) as usize
}

/// One count per alive player-tick on `side`, in the cell holding the
/// player's planar position.
pub fn build_heatmap(ticks: &[TickRecord], side: Team, bounds: &Rect, cell_size: f64) -> Result<Heatmap, EvalError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(EvalError::BucketWidth);
    }
    let width = cells_along(bounds.width(), cell_size);
    let height = cells_along(bounds.height(), cell_size);
    let mut counts = vec![0.0; width * height];
    let mut clamped = 0;
    for t in ticks {
        for p in t.players.iter().filter(|p| p.alive && p.team == side) {
            let [x, y, _] = p.position;
            if x < bounds.min.x || x > bounds.max.x || y < bounds.min.y || y > bounds.max.y {
                clamped += 1;
            }
            let cx = (((x - bounds.min.x) / cell_size).floor().max(0.0) as usize).min(width - 1);
            let cy = (((y - bounds.min.y) / cell_size).floor().max(0.0) as usize).min(height - 1);
            counts[cy * width + cx] += 1.0;
        }
    }
    let mut h = Heatmap::from_counts(width, height, cell_size, [bounds.min.x, bounds.min.y], &counts)?;
    h.clamped = clamped;
    Ok(h)
}

/// Absolute summed difference over cells.
pub fn asd(p: &Heatmap, q: &Heatmap) -> Result<f64, EvalError> {
    p.same_shape(q)?;
    Ok(p.cells.iter().zip(&q.cells).map(|(a, b)| (a - b).abs()).sum())
}

/// Compares the multisets of cell values, ignoring where the cells are.
/// Each heatmap's values go into `n_buckets` equal-width buckets spanning the
/// joint value range, every cell weighing the same; the result is the 1D
/// transport cost between those histograms with adjacent buckets one unit
/// apart.
pub fn emd_1d_no_location(p: &Heatmap, q: &Heatmap, n_buckets: usize) -> Result<f64, EvalError> {
    p.same_shape(q)?;
    if n_buckets == 0 {
        return Err(EvalError::BucketWidth);
    }
    let all = p.cells.iter().chain(&q.cells);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_buckets as f64;
    let bucket = |v: f64| if width > 0.0 { (((v - lo) / width).floor() as usize).min(n_buckets - 1) } else { 0 };
    let unit = 1.0 / p.cells.len() as f64;
    let mut diff = vec![0.0; n_buckets];
    for (&a, &b) in p.cells.iter().zip(&q.cells) {
        diff[bucket(a)] += unit;
        diff[bucket(b)] -= unit;
    }
    let mut carried = 0.0;
    let mut total = 0.0;
    for d in &diff[..n_buckets - 1] {
        carried += d;
        total += carried.abs();
    }
    Ok(total)
}

fn check_mass(h: &Heatmap) -> Result<(), EvalError> {
    let m = h.mass();
    if (m - 1.0).abs() > 1e-6 || h.cells.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(EvalError::Unnormalized(m));
    }
    Ok(())
}

/// Optimal transport cost between two normalized heatmaps, with Euclidean
/// ground distance between cell centres measured in cells. Only nonzero
/// cells enter the problem.
pub fn emd_2d(p: &Heatmap, q: &Heatmap) -> Result<f64, EvalError> {
    p.same_shape(q)?;
    check_mass(p)?;
    check_mass(q)?;
    let support = |h: &Heatmap| -> (Vec<f64>, Vec<(f64, f64)>) {
        let nz: Vec<usize> = (0..h.cells.len()).filter(|&k| h.cells[k] > 0.0).collect();
        (nz.iter().map(|&k| h.cells[k]).collect(), nz.iter().map(|&k| ((k % h.width) as f64, (k / h.width) as f64)).collect())
    };
    let (a, pa) = support(p);
    let (b, pb) = support(q);
    Ok(transport_cost(&a, &b, |i, j| (pa[i].0 - pb[j].0).hypot(pa[i].1 - pb[j].1))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapDistances {
    pub emd_1d: f64,
    pub emd_2d: f64,
    pub asd: f64,
}

pub fn heatmap_distances(p: &Heatmap, q: &Heatmap) -> Result<HeatmapDistances, EvalError> {
    Ok(HeatmapDistances { emd_1d: emd_1d_no_location(p, q, 10)?, emd_2d: emd_2d(p, q)?, asd: asd(p, q)? })
}

/// Colour stops at t = 0, 1/3, 2/3 and 1: blue, green, yellow, red.
pub const RAMP_STOPS: [[u8; 3]; 4] = [[0, 0, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]];

/// Piecewise-linear interpolation between [`RAMP_STOPS`], each channel
/// rounded to the nearest integer. `t` is clamped to [0, 1].
pub fn ramp(t: f64) -> [u8; 3] {
    let s = t.clamp(0.0, 1.0) * 3.0;
    let k = (s.floor() as usize).min(2);
    let f = s - k as f64;
    let (a, b) = (RAMP_STOPS[k], RAMP_STOPS[k + 1]);
    std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * f).round() as u8)
}

/// Writes a PNG with `scale` pixels per cell, north (larger y) at the top.
/// Cells map to `ramp(value / max)`; a heatmap whose cells are all equal
/// has no contrast and renders at `ramp(0.5)`.
pub fn render_heatmap(h: &Heatmap, path: &Path, scale: u32) -> Result<(), EvalError> {
    let scale = scale.max(1);
    let max = h.cells.iter().copied().fold(0.0f64, f64::max);
    let flat = h.cells.iter().all(|&v| v == h.cells[0]);
    let img = RgbImage::from_fn(h.width as u32 * scale, h.height as u32 * scale, |px, py| {
        let x = (px / scale) as usize;
        let y = h.height - 1 - (py / scale) as usize;
        let t = if flat || max == 0.0 { 0.5 } else { h.get(x, y) / max };
        Rgb(ramp(t))
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(w: usize, h: usize, x: usize, y: usize) -> Heatmap {
        let mut c = vec![0.0; w * h];
        c[y * w + x] = 1.0;
        Heatmap::from_counts(w, h, 1.0, [0.0, 0.0], &c).unwrap()
    }

    #[test]
    fn shift_by_four_cells() {
        assert_eq!(emd_2d(&unit(5, 1, 0, 0), &unit(5, 1, 4, 0)).unwrap(), 4.0);
    }

    #[test]
    fn asd_of_disjoint_masses() {
        assert_eq!(asd(&unit(3, 3, 0, 0), &unit(3, 3, 2, 1)).unwrap(), 2.0);
        assert_eq!(asd(&unit(3, 3, 1, 1), &unit(3, 3, 1, 1)).unwrap(), 0.0);
    }

    #[test]
    fn ramp_stops() {
        assert_eq!(ramp(0.0), [0, 0, 255]);
        assert_eq!(ramp(1.0), [255, 0, 0]);
        assert_eq!(ramp(0.5), [128, 255, 0]);
        assert_eq!(ramp(1.0 / 6.0), [0, 128, 128]);
    }
}

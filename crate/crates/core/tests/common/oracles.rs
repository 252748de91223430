//! Brute-force recomputations used to cross-check the optimised metrics and
//! projections. Each one walks pixels or points directly and shares no code
//! with the library beyond its public types.

use ptclab::geometry::{CameraIntrinsics, Point3};
use ptclab::raster::Grid;

/// `(mae_mm, rmse_mm)` from an explicit list of per-pixel errors.
pub fn mae_rmse(pred: &Grid<f32>, gt: &Grid<f32>, cap: f64) -> Option<(f64, f64)> {
    let mut errs = Vec::new();
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let g = gt.get(r, c) as f64;
            if g > 0.0 && g <= cap {
                errs.push(pred.get(r, c) as f64 - g);
            }
        }
    }
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Some((mae * 1000.0, rmse * 1000.0))
}

fn pixel_of(k: &CameraIntrinsics, p: Point3) -> Option<(i64, i64)> {
    if p.z <= 1e-6 {
        return None;
    }
    let u = k.cx + k.fx * p.x / p.z;
    let v = k.cy + k.fy * p.y / p.z;
    Some(((v + 0.5).floor() as i64, (u + 0.5).floor() as i64))
}

/// For every pixel, the smallest depth among the points landing on it.
pub fn rasterize(points: &[Point3], k: &CameraIntrinsics) -> Grid<f32> {
    Grid::from_fn(k.height, k.width, |r, c| {
        points
            .iter()
            .filter(|&&p| pixel_of(k, p) == Some((r as i64, c as i64)))
            .map(|p| p.z as f32)
            .fold(0.0, |best, z| if best == 0.0 || z < best { z } else { best })
    })
}

/// For every column, the smallest depth among points whose column it is,
/// repeated down the whole column.
pub fn lift(points: &[Point3], k: &CameraIntrinsics) -> Grid<f32> {
    let column = |c: usize| {
        points
            .iter()
            .filter(|&&p| p.z > 1e-6 && ((k.cx + k.fx * p.x / p.z) + 0.5).floor() as i64 == c as i64)
            .map(|p| p.z as f32)
            .fold(0.0, |best, z| if best == 0.0 || z < best { z } else { best })
    };
    let cols: Vec<f32> = (0..k.width).map(column).collect();
    Grid::from_fn(k.height, k.width, |_, c| cols[c])
}

/// `(mae_on_mm, mae_off_mm, ratio)` with `ε = 1 mm`; `None` without supported pixels.
pub fn support_split(pred: &Grid<f32>, gt: &Grid<f32>, support: &Grid<u8>, cap: f64) -> Option<(f64, Option<f64>, f64)> {
    let (mut on, mut off) = (Vec::new(), Vec::new());
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let g = gt.get(r, c) as f64;
            if g > 0.0 && g <= cap {
                let e = (pred.get(r, c) as f64 - g).abs() * 1000.0;
                if support.get(r, c) != 0 { on.push(e) } else { off.push(e) }
            }
        }
    }
    if on.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mae_on = mean(&on);
    let mae_off = (!off.is_empty()).then(|| mean(&off));
    Some((mae_on, mae_off, (mae_off.unwrap_or(0.0) + 1.0) / (mae_on + 1.0)))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

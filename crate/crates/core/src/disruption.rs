//! Position-correspondence disruptions applied consistently to every channel
//! of a bundle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_point, rasterize, CameraIntrinsics, Point3};
use crate::raster::{Grid, SparseDepthImage};
use crate::simsensor::SampleBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode3d {
    #[default]
    Lift,
    RandomHeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisruptionConfig {
    pub enable_2d: bool,
    pub scale_low: f64,
    pub scale_high: f64,
    /// Output extents; `None` keeps the input extents.
    pub crop_h: Option<usize>,
    pub crop_w: Option<usize>,
    pub enable_3d: bool,
    pub mode_3d: Mode3d,
    /// Range of the replacement elevation used by [`Mode3d::RandomHeight`].
    pub height_range: [f64; 2],
}

impl Default for DisruptionConfig {
    fn default() -> Self {
        Self {
            enable_2d: false,
            scale_low: 1.0,
            scale_high: 1.5,
            crop_h: None,
            crop_w: None,
            enable_3d: false,
            mode_3d: Mode3d::Lift,
            height_range: [-2.0, 2.0],
        }
    }
}

impl DisruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1.0 <= self.scale_low && self.scale_low <= self.scale_high && self.scale_high.is_finite()) {
            return Err(Error::config(format!(
                "disruption scale range [{}, {}] must satisfy 1 <= low <= high",
                self.scale_low, self.scale_high
            )));
        }
        if self.height_range[0] > self.height_range[1] {
            return Err(Error::config("disruption.height_range is reversed"));
        }
        Ok(())
    }
}

/// The concrete draw of one resize-then-crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropParams {
    pub scale: f64,
    pub row_offset: usize,
    pub col_offset: usize,
    pub height: usize,
    pub width: usize,
}

fn scaled_extent(n: usize, s: f64) -> usize {
    (n as f64 * s).round() as usize
}

/// Source index of a destination pixel under nearest resampling.
#[inline]
fn nearest_src(dst: usize, s: f64, n: usize) -> usize {
    (((dst as f64 + 0.5) / s).floor() as usize).min(n - 1)
}

/// Destination pixel of a source pixel centre.
#[inline]
fn forward_dst(src: usize, s: f64) -> usize {
    ((src as f64 + 0.5) * s).floor() as usize
}

fn resize_nearest<T: Copy + Default>(g: &Grid<T>, p: &CropParams) -> Grid<T> {
    let (h, w) = g.dims();
    Grid::from_fn(p.height, p.width, |r, c| {
        g.get(nearest_src(r + p.row_offset, p.scale, h), nearest_src(c + p.col_offset, p.scale, w))
    })
}

fn resize_bilinear(g: &Grid<f32>, p: &CropParams) -> Grid<f32> {
    let (h, w) = g.dims();
    let src = |dst: usize, n: usize| {
        let u = ((dst as f64 + 0.5) / p.scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, u - i0 as f64)
    };
    Grid::from_fn(p.height, p.width, |r, c| {
        let (r0, r1, fr) = src(r + p.row_offset, h);
        let (c0, c1, fc) = src(c + p.col_offset, w);
        let top = g.get(r0, c0) as f64 * (1.0 - fc) + g.get(r0, c1) as f64 * fc;
        let bottom = g.get(r1, c0) as f64 * (1.0 - fc) + g.get(r1, c1) as f64 * fc;
        (top * (1.0 - fr) + bottom * fr) as f32
    })
}

/// Moves each valid sample to the pixel its centre lands on; depths are kept.
fn resize_sparse(g: &SparseDepthImage, p: &CropParams) -> SparseDepthImage {
    let mut out = SparseDepthImage::new(p.height, p.width);
    for r in 0..g.height() {
        for c in 0..g.width() {
            let v = g.get(r, c);
            if v <= 0.0 {
                continue;
            }
            let (dr, dc) = (forward_dst(r, p.scale), forward_dst(c, p.scale));
            if dr < p.row_offset || dc < p.col_offset {
                continue;
            }
            let (rr, cc) = (dr - p.row_offset, dc - p.col_offset);
            if rr < p.height && cc < p.width {
                out.zbuffer_write(rr, cc, v);
            }
        }
    }
    out
}

/// Draws the scale and a uniform crop offset for a raster of the given extents.
pub fn draw_crop(cfg: &DisruptionConfig, height: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<CropParams> {
    cfg.validate()?;
    let s = if cfg.scale_high > cfg.scale_low { rng.random_range(cfg.scale_low..cfg.scale_high) } else { cfg.scale_low };
    let (ch, cw) = (cfg.crop_h.unwrap_or(height), cfg.crop_w.unwrap_or(width));
    let (sh, sw) = (scaled_extent(height, s), scaled_extent(width, s));
    if ch > sh || cw > sw || ch == 0 || cw == 0 {
        return Err(Error::config(format!("crop {ch}x{cw} does not fit the scaled raster {sh}x{sw}")));
    }
    Ok(CropParams {
        scale: s,
        row_offset: rng.random_range(0..=sh - ch),
        col_offset: rng.random_range(0..=sw - cw),
        height: ch,
        width: cw,
    })
}

/// Resize-then-crop with fixed parameters.
pub fn resize_crop_with(bundle: &SampleBundle, p: &CropParams) -> Result<SampleBundle> {
    let (h, w) = bundle.image.dims();
    let (sh, sw) = (scaled_extent(h, p.scale), scaled_extent(w, p.scale));
    if p.row_offset + p.height > sh || p.col_offset + p.width > sw {
        return Err(Error::config(format!(
            "crop {}x{} at ({}, {}) does not fit the scaled raster {sh}x{sw}",
            p.height, p.width, p.row_offset, p.col_offset
        )));
    }
    let k = bundle.intrinsics.scaled_cropped(p.scale, p.row_offset, p.col_offset, p.height, p.width);
    Ok(SampleBundle {
        seed: bundle.seed,
        intrinsics: k,
        image: resize_bilinear(&bundle.image, p),
        lidar: resize_sparse(&bundle.lidar, p),
        radar_points: bundle.radar_points.clone(),
        radar_truth: bundle.radar_truth.clone(),
        // Without points (a LiDAR-derived depth input) the raster itself is remapped.
        radar_raster: if bundle.radar_points.is_empty() {
            resize_sparse(&bundle.radar_raster, p)
        } else {
            rasterize(&bundle.radar_points, &k)
        },
        mask: resize_nearest(&bundle.mask, p),
        dense_gt: resize_nearest(&bundle.dense_gt, p),
        target: resize_sparse(&bundle.target, p),
    })
}

/// Random up-scale by `s ~ U(scale_low, scale_high)` followed by a crop at a
/// uniform offset, applied to every raster and to the camera.
pub fn resize_crop(bundle: &SampleBundle, cfg: &DisruptionConfig, rng: &mut ChaCha8Rng) -> Result<SampleBundle> {
    let p = draw_crop(cfg, bundle.image.height(), bundle.image.width(), rng)?;
    resize_crop_with(bundle, &p)
}

/// Every in-frame radar point fills its whole image column with its depth.
pub fn lift_radar(points: &[Point3], k: &CameraIntrinsics) -> SparseDepthImage {
    let mut column: Vec<f32> = vec![0.0; k.width];
    // Only the column and depth matter: project the point as if it sat on
    // the principal row.
    let probe = CameraIntrinsics { cy: 0.0, height: 1, ..*k };
    for &p in points {
        if let Some(s) = project_point(&probe, Point3::new(p.x, 0.0, p.z)) {
            let d = s.depth as f32;
            let slot = &mut column[s.col];
            if *slot == 0.0 || d < *slot {
                *slot = d;
            }
        }
    }
    Grid::from_fn(k.height, k.width, |_, c| column[c])
}

/// Replaces every elevation with a fresh uniform draw; `x` and `z` are kept.
pub fn random_height(points: &[Point3], range: [f64; 2], rng: &mut ChaCha8Rng) -> Vec<Point3> {
    points
        .iter()
        .map(|p| {
            let y = if range[1] > range[0] { rng.random_range(range[0]..range[1]) } else { range[0] };
            Point3::new(p.x, y, p.z)
        })
        .collect()
}

/// Applies the configured disruptions: resize-then-crop first, then the radar
/// disruption in the resulting camera.
pub fn apply(bundle: &SampleBundle, cfg: &DisruptionConfig, rng: &mut ChaCha8Rng) -> Result<SampleBundle> {
    cfg.validate()?;
    let mut out = if cfg.enable_2d { resize_crop(bundle, cfg, rng)? } else { bundle.clone() };
    if cfg.enable_3d {
        match cfg.mode_3d {
            Mode3d::Lift => out.radar_raster = lift_radar(&out.radar_points, &out.intrinsics),
            Mode3d::RandomHeight => {
                out.radar_points = random_height(&out.radar_points, cfg.height_range, rng);
                out.radar_raster = rasterize(&out.radar_points, &out.intrinsics);
            }
        }
    }
    Ok(out)
}

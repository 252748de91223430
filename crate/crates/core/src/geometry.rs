//! Pinhole camera model and rigid transforms.
//!
//! Camera frame: x right, y down, z forward, metres. Depth means camera-frame
//! `z`, not ray length. Pixel `(row, col)` has its centre at continuous image
//! coordinates `(row, col)`; projections round to nearest with ties toward +∞.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::SparseDepthImage;

/// Points closer than this to the image plane do not project.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Camera with the principal point at the image centre and the given
    /// horizontal field of view.
    pub fn centered(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Intrinsics of the image obtained by scaling by `s` about pixel centres
    /// and then cropping at `(row_offset, col_offset)` to `height × width`.
    /// The principal point may fall outside the crop, so this is not validated.
    pub fn scaled_cropped(&self, s: f64, row_offset: usize, col_offset: usize, height: usize, width: usize) -> Self {
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s + 0.5 * (s - 1.0) - col_offset as f64,
            cy: self.cy * s + 0.5 * (s - 1.0) - row_offset as f64,
            width,
            height,
        }
    }

    /// Intrinsics of the horizontally mirrored image.
    pub fn flipped(&self) -> Self {
        Self {
            cx: self.width as f64 - 1.0 - self.cx,
            ..*self
        }
    }

    /// Unnormalised direction of the ray through the centre of a pixel.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Point3 {
        Point3::new((col as f64 - self.cx) / self.fx, (row as f64 - self.cy) / self.fy, 1.0)
    }
}

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    rotation: [[f64; 3]; 3],
    translation: Point3,
}

impl RigidPose {
    pub const IDENTITY: Self = Self {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: Point3::new(0.0, 0.0, 0.0),
    };

    /// Fails unless `rotation` is orthonormal with determinant +1 within 1e-9.
    pub fn new(rotation: [[f64; 3]; 3], translation: Point3) -> Result<Self> {
        let r = rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(Error::config("rotation is not orthonormal"));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::config("rotation has determinant != +1"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn translation(t: Point3) -> Self {
        Self {
            translation: t,
            ..Self::IDENTITY
        }
    }

    /// Rodrigues rotation of `angle` radians about `axis`, then translation `t`.
    pub fn from_axis_angle(axis: Point3, angle: f64, t: Point3) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::translation(t);
        }
        let Point3 { x, y, z } = axis * (1.0 / n);
        let (s, c) = angle.sin_cos();
        let v = 1.0 - c;
        let rotation = [
            [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
            [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
            [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
        ];
        Self {
            rotation,
            translation: t,
        }
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation_part(&self) -> Point3 {
        self.translation
    }

    pub fn rotate(&self, p: Point3) -> Point3 {
        let r = &self.rotation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        )
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let inv = Self {
            rotation: rt,
            translation: Point3::default(),
        };
        let t = inv.rotate(self.translation) * -1.0;
        Self {
            rotation: rt,
            translation: t,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.rotation[i][k] * other.rotation[k][j]).sum();
            }
        }
        Self {
            rotation,
            translation: self.apply(other.translation),
        }
    }
}

/// `pose · p`.
pub fn transform(pose: &RigidPose, p: Point3) -> Point3 {
    pose.apply(p)
}

/// A projected point: integer pixel plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub row: usize,
    pub col: usize,
    pub depth: f64,
}

#[inline]
pub(crate) fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Projects `p` to its pixel, or `None` when it is behind the camera or out of frame.
pub fn project_point(k: &CameraIntrinsics, p: Point3) -> Option<PixelSample> {
    if !(p.z > MIN_DEPTH) {
        return None;
    }
    let col = round_half_up(k.cx + k.fx * p.x / p.z);
    let row = round_half_up(k.cy + k.fy * p.y / p.z);
    if col < 0.0 || row < 0.0 || col >= k.width as f64 || row >= k.height as f64 {
        return None;
    }
    Some(PixelSample {
        row: row as usize,
        col: col as usize,
        depth: p.z,
    })
}

/// Inverse of [`project_point`] for a pixel centre at the given depth.
pub fn backproject(k: &CameraIntrinsics, row: usize, col: usize, depth: f64) -> Result<Point3> {
    if !(depth > 0.0) {
        return Err(Error::usage(format!("backproject needs positive depth, got {depth}")));
    }
    Ok(Point3::new(
        (col as f64 - k.cx) * depth / k.fx,
        (row as f64 - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Z-buffered point splat: every in-frustum point writes its depth, the
/// nearest wins, and everything else is dropped.
pub fn rasterize(points: &[Point3], k: &CameraIntrinsics) -> SparseDepthImage {
    let mut out = SparseDepthImage::new(k.height, k.width);
    for &p in points {
        if let Some(s) = project_point(k, p) {
            out.zbuffer_write(s.row, s.col, s.depth as f32);
        }
    }
    out
}

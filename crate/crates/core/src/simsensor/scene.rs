//! Box-and-plane worlds and their analytic ray caster.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{project_point, CameraIntrinsics, Point3};
use crate::raster::{BinaryMask, DenseDepthImage, Grid};

/// Distribution of random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Edge length range of a box in metres.
    pub size_range: [f64; 2],
    /// Range of box centre depths in metres.
    pub depth_range: [f64; 2],
    /// Camera height above the ground plane.
    pub camera_height: f64,
    pub reflective_prob: f64,
    /// Number of objects that get a lateral velocity.
    pub moving_objects: usize,
    /// Lateral speed of moving objects in metres per frame.
    pub speed: f64,
    /// Depth range of the far wall closing the scene; `None` leaves open sky.
    pub backdrop_range: Option<[f64; 2]>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            min_objects: 3,
            max_objects: 12,
            size_range: [0.5, 4.0],
            depth_range: [2.0, 70.0],
            camera_height: 1.5,
            reflective_prob: 0.5,
            moving_objects: 0,
            speed: 0.5,
            backdrop_range: Some([74.0, 79.0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub center: Point3,
    pub half_extents: [f64; 3],
    pub class_id: u32,
    pub reflective: bool,
    pub albedo: f64,
    /// Metres per frame.
    pub velocity: Point3,
}

impl SceneObject {
    /// Box translated by `velocity · frame`.
    pub fn at_frame(&self, frame: f64) -> Self {
        Self {
            center: self.center + self.velocity * frame,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// `y` of the ground plane in camera coordinates (the camera height).
    pub ground_plane: f64,
    pub ground_albedo: f64,
    pub backdrop: Option<f64>,
    pub backdrop_albedo: f64,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

/// What a ray hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Surface {
    #[default]
    Sky,
    Ground,
    Backdrop,
    Object(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hit {
    /// Ray parameter; equals camera depth for rays with unit `z`.
    pub t: f64,
    pub surface: Surface,
    pub normal: Point3,
}

const RAY_EPS: f64 = 1e-9;

/// Classes `0..REFLECTIVE_CLASSES` (vehicles, walls, poles) return radar echoes.
pub const REFLECTIVE_CLASSES: u32 = 3;
pub const NUM_CLASSES: u32 = 6;

/// Entry parameter and normal of a ray against an axis-aligned box.
pub(crate) fn ray_box(origin: Point3, dir: Point3, obj: &SceneObject) -> Option<(f64, Point3)> {
    let o = [origin.x, origin.y, origin.z];
    let d = [dir.x, dir.y, dir.z];
    let c = [obj.center.x, obj.center.y, obj.center.z];
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        let lo = c[a] - obj.half_extents[a];
        let hi = c[a] + obj.half_extents[a];
        if d[a].abs() < 1e-15 {
            if o[a] < lo || o[a] > hi {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((lo - o[a]) / d[a], (hi - o[a]) / d[a]);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis = a;
        }
        t_far = t_far.min(t1);
    }
    if t_near > t_far || t_near <= RAY_EPS {
        return None;
    }
    let mut n = [0.0; 3];
    n[axis] = -d[axis].signum();
    Some((t_near, Point3::new(n[0], n[1], n[2])))
}

impl SceneSpec {
    /// Nearest intersection along `origin + t·dir`, with objects advanced to `frame`.
    pub fn cast(&self, origin: Point3, dir: Point3, frame: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut offer = |t: f64, surface: Surface, normal: Point3| {
            if t > RAY_EPS && best.is_none_or(|b| t < b.t) {
                best = Some(Hit { t, surface, normal });
            }
        };
        if dir.y > 1e-15 {
            offer((self.ground_plane - origin.y) / dir.y, Surface::Ground, Point3::new(0.0, -1.0, 0.0));
        }
        if let Some(zb) = self.backdrop {
            if dir.z > 1e-15 {
                offer((zb - origin.z) / dir.z, Surface::Backdrop, Point3::new(0.0, 0.0, -1.0));
            }
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if let Some((t, n)) = ray_box(origin, dir, &obj.at_frame(frame)) {
                offer(t, Surface::Object(i), n);
            }
        }
        best
    }

    pub fn is_reflective(&self, s: Surface) -> bool {
        matches!(s, Surface::Object(i) if self.objects[i].reflective)
    }

    pub fn albedo(&self, s: Surface) -> f64 {
        match s {
            Surface::Sky => 0.0,
            Surface::Ground => self.ground_albedo,
            Surface::Backdrop => self.backdrop_albedo,
            Surface::Object(i) => self.objects[i].albedo,
        }
    }
}

/// Per-pixel first hit of the camera rays, capped at `max_range`: rays with
/// no hit inside the range report `Sky` at `max_range`.
pub fn trace(scene: &SceneSpec, k: &CameraIntrinsics, max_range: f64) -> Grid<Hit> {
    Grid::from_fn(k.height, k.width, |r, c| {
        let dir = k.pixel_ray(r, c);
        match scene.cast(Point3::new(0.0, 0.0, 0.0), dir, 0.0) {
            Some(h) if h.t * dir.z <= max_range => h,
            _ => Hit {
                t: max_range,
                ..Hit::default()
            },
        }
    })
}

pub fn render_dense_depth(scene: &SceneSpec, k: &CameraIntrinsics, max_range: f64) -> DenseDepthImage {
    trace(scene, k, max_range).map(|h| h.t as f32)
}

pub fn radar_aware_mask(scene: &SceneSpec, k: &CameraIntrinsics, max_range: f64) -> BinaryMask {
    mask_from_hits(&trace(scene, k, max_range))
}

/// Every object pixel, reflective or not; radar returns fall inside it.
pub(crate) fn mask_from_hits(hits: &Grid<Hit>) -> BinaryMask {
    hits.map(|h| u8::from(matches!(h.surface, Surface::Object(_))))
}

/// Draws a scene; every object centre projects inside the image and sits
/// within the configured depth range.
pub fn sample_scene(rng: &mut ChaCha8Rng, cfg: &SceneConfig, k: &CameraIntrinsics, seed: u64) -> SceneSpec {
    let half_fov = (k.width as f64 / 2.0 / k.fx).atan();
    let n = if cfg.max_objects == 0 {
        0
    } else {
        rng.random_range(cfg.min_objects.min(cfg.max_objects)..=cfg.max_objects)
    };
    let mut objects = Vec::with_capacity(n);
    let (s_lo, s_hi) = (cfg.size_range[0], cfg.size_range[1].max(cfg.size_range[0]));
    let (z_lo, z_hi) = (cfg.depth_range[0], cfg.depth_range[1].max(cfg.depth_range[0]));
    while objects.len() < n {
        let half = [
            rng.random_range(s_lo..=s_hi) / 2.0,
            rng.random_range(s_lo..=s_hi) / 2.0,
            rng.random_range(s_lo..=s_hi) / 2.0,
        ];
        let z: f64 = rng.random_range(z_lo..=z_hi);
        let x = rng.random_range(-1.0..=1.0) * z * (0.9 * half_fov).tan();
        let center = Point3::new(x, cfg.camera_height - half[1], z);
        let class_id = rng.random_range(0..NUM_CLASSES);
        let albedo = rng.random_range(0.15..=1.0);
        let reflective_draw = rng.random_bool(cfg.reflective_prob.clamp(0.0, 1.0));
        if project_point(k, center).is_none() || z - half[2] < 0.5 {
            continue;
        }
        objects.push(SceneObject {
            center,
            half_extents: half,
            class_id: if reflective_draw { class_id % REFLECTIVE_CLASSES } else { REFLECTIVE_CLASSES + class_id % (NUM_CLASSES - REFLECTIVE_CLASSES) },
            reflective: reflective_draw,
            albedo,
            velocity: Point3::default(),
        });
    }
    if !objects.is_empty() && !objects.iter().any(|o| o.reflective) {
        objects[0].reflective = true;
        objects[0].class_id %= REFLECTIVE_CLASSES;
    }
    for obj in objects.iter_mut().take(cfg.moving_objects) {
        let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        obj.velocity = Point3::new(dir * cfg.speed, 0.0, 0.0);
    }
    let backdrop = cfg.backdrop_range.map(|[lo, hi]| rng.random_range(lo..=hi.max(lo)));
    SceneSpec {
        ground_plane: cfg.camera_height,
        ground_albedo: rng.random_range(0.3..=0.6),
        backdrop,
        backdrop_albedo: rng.random_range(0.6..=0.9),
        objects,
        seed,
    }
}

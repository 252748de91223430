//! Camera, LiDAR and radar models over a traced scene.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{trace, Hit, SceneSpec, Surface};
use crate::geometry::{backproject, round_half_up, CameraIntrinsics, Point3};
use crate::raster::{Grid, IntensityImage, SparseDepthImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub n_scanlines: usize,
    /// Elevation of the highest ring in degrees (positive is up).
    pub elevation_top_deg: f64,
    pub elevation_bottom_deg: f64,
    pub azimuth_step_deg: f64,
    /// Range noise; samples are clamped to three standard deviations.
    pub sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_scanlines: 16,
            elevation_top_deg: 24.0,
            elevation_bottom_deg: -24.0,
            azimuth_step_deg: 1.0,
            sigma: 0.0,
        }
    }
}

impl LidarConfig {
    pub fn ring_elevations_deg(&self) -> Vec<f64> {
        let n = self.n_scanlines.max(1);
        if n == 1 {
            return vec![self.elevation_top_deg];
        }
        let step = (self.elevation_bottom_deg - self.elevation_top_deg) / (n - 1) as f64;
        (0..n).map(|i| self.elevation_top_deg + step * i as f64).collect()
    }

    fn ring_spacing_deg(&self) -> f64 {
        if self.n_scanlines <= 1 {
            0.0
        } else {
            (self.elevation_top_deg - self.elevation_bottom_deg).abs() / (self.n_scanlines - 1) as f64
        }
    }
}

/// How the radar reports elevation, which real automotive radars measure badly or not at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ElevationModel {
    /// `y` drawn from `U(lo, hi)` metres, unrelated to the target.
    Uniform { lo: f64, hi: f64 },
    /// True `y` plus Gaussian noise.
    NoisyTrue { sigma: f64 },
    /// `y` collapsed onto the sensor plane `height` metres above the ground, plus noise.
    MountPlane { height: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Inclusive point count range per frame.
    pub n_range: [usize; 2],
    pub range_sigma: f64,
    pub elevation: ElevationModel,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            n_range: [50, 80],
            range_sigma: 0.3,
            elevation: ElevationModel::MountPlane { height: 0.5, sigma: 0.1 },
        }
    }
}

/// Radar returns together with the on-surface points they were measured from.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarScan {
    pub points: Vec<Point3>,
    pub truth: Vec<Point3>,
}

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let v = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    v.clamp(-3.0 * sigma, 3.0 * sigma)
}

const LIGHT: Point3 = Point3::new(-0.4, -1.0, -0.6);
const SKY_INTENSITY: f64 = 0.95;
const SHADING_DEPTH: f64 = 40.0;

/// Noise-free intensity of one hit.
pub(crate) fn shade(scene: &SceneSpec, hit: &Hit) -> f64 {
    if hit.surface == Surface::Sky {
        return SKY_INTENSITY;
    }
    let lambert = hit.normal.dot(LIGHT.normalized()).max(0.0);
    scene.albedo(hit.surface) * (0.35 + 0.65 * lambert) / (1.0 + hit.t / SHADING_DEPTH)
}

pub(crate) fn image_from_hits(scene: &SceneSpec, hits: &Grid<Hit>, noise: f64, rng: &mut ChaCha8Rng) -> IntensityImage {
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise"));
    hits.map(|h| shade(scene, &h)).map(|v| {
        let n = normal.map_or(0.0, |d| d.sample(rng));
        (v + n).clamp(0.0, 1.0) as f32
    })
}

/// Shaded intensity with additive Gaussian noise, clamped to `[0, 1]`.
pub fn render_image(scene: &SceneSpec, k: &CameraIntrinsics, max_range: f64, noise: f64, rng: &mut ChaCha8Rng) -> IntensityImage {
    image_from_hits(scene, &trace(scene, k, max_range), noise, rng)
}

/// Pixel that a beam at the given elevation and azimuth is snapped to.
fn beam_pixel(k: &CameraIntrinsics, elevation_deg: f64, azimuth_deg: f64) -> Option<(usize, usize)> {
    if azimuth_deg.abs() >= 89.0 {
        return None;
    }
    let row = round_half_up(k.cy - k.fy * elevation_deg.to_radians().tan());
    let col = round_half_up(k.cx + k.fx * azimuth_deg.to_radians().tan());
    (row >= 0.0 && col >= 0.0 && row < k.height as f64 && col < k.width as f64).then_some((row as usize, col as usize))
}

fn beam_pixels(k: &CameraIntrinsics, cfg: &LidarConfig, elevation_shift: f64, azimuth_shift: f64) -> Vec<(usize, usize)> {
    let half = (k.width as f64 / 2.0 / k.fx).atan().to_degrees() + cfg.azimuth_step_deg;
    let step = cfg.azimuth_step_deg.max(1e-3);
    let n_az = (2.0 * half / step).ceil() as usize + 1;
    let mut out = Vec::new();
    for e in cfg.ring_elevations_deg() {
        let mut last = None;
        for j in 0..n_az {
            let a = -half + step * j as f64 + azimuth_shift;
            if let Some(px) = beam_pixel(k, e + elevation_shift, a) {
                if last != Some(px) {
                    out.push(px);
                    last = Some(px);
                }
            }
        }
    }
    out
}

/// One sweep of a spinning LiDAR at the camera centre. Beams fire through
/// pixel centres of fixed rings, so the sample pattern is identical for every scene.
pub fn simulate_lidar(
    scene: &SceneSpec,
    k: &CameraIntrinsics,
    cfg: &LidarConfig,
    max_range: f64,
    rng: &mut ChaCha8Rng,
) -> SparseDepthImage {
    let mut out = SparseDepthImage::new(k.height, k.width);
    sweep_into(&mut out, scene, k, cfg, max_range, 0.0, Point3::default(), 0.0, 0.0, rng);
    out
}

#[allow(clippy::too_many_arguments)]
fn sweep_into(
    out: &mut SparseDepthImage,
    scene: &SceneSpec,
    k: &CameraIntrinsics,
    cfg: &LidarConfig,
    max_range: f64,
    frame: f64,
    origin: Point3,
    elevation_shift: f64,
    azimuth_shift: f64,
    rng: &mut ChaCha8Rng,
) {
    for (r, c) in beam_pixels(k, cfg, elevation_shift, azimuth_shift) {
        let dir = k.pixel_ray(r, c);
        let Some(hit) = scene.cast(origin, dir, frame) else { continue };
        if hit.surface == Surface::Sky || hit.t > max_range {
            continue;
        }
        let depth = hit.t + truncated_normal(rng, cfg.sigma);
        if depth > 0.0 {
            // The sweep is reprojected as if the sensor sat exactly at the reference pose.
            out.zbuffer_write(r, c, depth.min(max_range) as f32);
        }
    }
}

/// Frames as (`elevation shift`, `azimuth shift`) in degrees; frame 0 is the reference sweep.
fn frame_offsets(cfg: &LidarConfig, j: usize) -> (f64, f64) {
    if j == 0 {
        return (0.0, 0.0);
    }
    let golden = 0.618_033_988_749_895_f64;
    let plastic = 0.754_877_666_246_693_f64;
    let frac = |v: f64| v - v.floor();
    (
        cfg.ring_spacing_deg() * frac(j as f64 * golden),
        cfg.azimuth_step_deg * frac(j as f64 * plastic),
    )
}

/// Multi-frame LiDAR stacking. Frames after the first see the sensor displaced
/// by isotropic Gaussian jitter and moving objects advanced by their velocity,
/// but every return is reprojected as though the world were static and the
/// poses exact. With `frames == 1` this is exactly [`simulate_lidar`].
pub fn accumulate_frames(
    scene: &SceneSpec,
    k: &CameraIntrinsics,
    cfg: &LidarConfig,
    max_range: f64,
    frames: usize,
    jitter_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> SparseDepthImage {
    let mut out = SparseDepthImage::new(k.height, k.width);
    let jitter = (jitter_sigma > 0.0).then(|| Normal::new(0.0, jitter_sigma).expect("finite jitter"));
    for j in 0..frames.max(1) {
        let origin = match (j, jitter) {
            (0, _) | (_, None) => Point3::default(),
            (_, Some(d)) => Point3::new(d.sample(rng), d.sample(rng), d.sample(rng)),
        };
        let (de, da) = frame_offsets(cfg, j);
        sweep_into(&mut out, scene, k, cfg, max_range, j as f64, origin, de, da, rng);
    }
    out
}

/// Keeps each sample independently with probability `1 / factor`.
pub fn downsample_lidar(sparse: &SparseDepthImage, factor: usize, rng: &mut ChaCha8Rng) -> SparseDepthImage {
    if factor <= 1 {
        return sparse.clone();
    }
    let p = 1.0 / factor as f64;
    sparse.map(|v| if v > 0.0 && rng.random_bool(p) { v } else { 0.0 })
}

/// Radar returns from reflective surfaces: each point is a visible
/// reflective pixel back-projected with Gaussian range noise, after which its
/// elevation is replaced according to `cfg.elevation`.
pub fn simulate_radar(
    scene: &SceneSpec,
    k: &CameraIntrinsics,
    hits: &Grid<Hit>,
    cfg: &RadarConfig,
    rng: &mut ChaCha8Rng,
) -> RadarScan {
    let candidates: Vec<usize> = (0..hits.len()).filter(|&i| scene.is_reflective(hits.data()[i].surface)).collect();
    if candidates.is_empty() {
        return RadarScan { points: vec![], truth: vec![] };
    }
    let (lo, hi) = (cfg.n_range[0], cfg.n_range[1].max(cfg.n_range[0]));
    let n = rng.random_range(lo..=hi);
    let mut points = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let idx = candidates[rng.random_range(0..candidates.len())];
        let (r, c) = (idx / k.width, idx % k.width);
        let surface = backproject(k, r, c, hits.data()[idx].t).expect("traced depth is positive");
        let range = surface.norm();
        let measured = surface * ((range + truncated_normal(rng, cfg.range_sigma)) / range);
        let y = match cfg.elevation {
            ElevationModel::Uniform { lo, hi } => rng.random_range(lo..=hi.max(lo)),
            ElevationModel::NoisyTrue { sigma } => measured.y + truncated_normal(rng, sigma),
            ElevationModel::MountPlane { height, sigma } => scene.ground_plane - height + truncated_normal(rng, sigma),
        };
        points.push(Point3::new(measured.x, y, measured.z));
        truth.push(surface);
    }
    RadarScan { points, truth }
}

#[cfg(test)]
mod tests {
    use super::super::scene::{radar_aware_mask, render_dense_depth, sample_scene, SceneConfig, SceneObject};
    use super::*;
    use rand::SeedableRng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::centered(96, 64, 70.0).unwrap()
    }

    fn scene(seed: u64) -> SceneSpec {
        sample_scene(&mut ChaCha8Rng::seed_from_u64(seed), &SceneConfig::default(), &cam(), seed)
    }

    fn flat_world(objects: Vec<SceneObject>) -> SceneSpec {
        SceneSpec {
            ground_plane: 1.5,
            ground_albedo: 1.0,
            backdrop: Some(60.0),
            backdrop_albedo: 1.0,
            objects,
            seed: 0,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn noiseless_flat_face_renders_constant() {
        let k = cam();
        let obj = SceneObject {
            center: Point3::new(0.0, 0.0, 11.0),
            half_extents: [3.0, 1.0, 1.0],
            class_id: 0,
            reflective: true,
            albedo: 1.0,
            velocity: Point3::default(),
        };
        let s = flat_world(vec![obj]);
        let img = render_image(&s, &k, 80.0, 0.0, &mut rng(0));
        let hits = trace(&s, &k, 80.0);
        let face: Vec<f32> = (0..img.len()).filter(|&i| hits.data()[i].surface == Surface::Object(0)).map(|i| img.data()[i]).collect();
        assert!(face.len() > 20);
        assert!(face.iter().all(|&v| v == face[0]));
    }

    #[test]
    fn image_is_seed_deterministic_and_bounded() {
        let k = cam();
        let s = scene(3);
        let a = render_image(&s, &k, 80.0, 0.01, &mut rng(9));
        let b = render_image(&s, &k, 80.0, 0.01, &mut rng(9));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn image_edges_follow_depth_edges() {
        let k = cam();
        for seed in 0..20 {
            let s = scene(seed);
            let hits = trace(&s, &k, 80.0);
            let img = image_from_hits(&s, &hits, 0.0, &mut rng(0));
            let depth = hits.map(|h| h.t);
            // Every horizontal intensity edge sits within one pixel of a depth
            // discontinuity or a change of face.
            for r in 0..k.height {
                for c in 1..k.width {
                    if (img.get(r, c) - img.get(r, c - 1)).abs() < 1e-6 {
                        continue;
                    }
                    let near = (c.saturating_sub(2)..=(c + 1).min(k.width - 1)).skip(1).any(|cc| {
                        let (a, b) = (hits.get(r, cc - 1), hits.get(r, cc));
                        a.surface != b.surface || a.normal != b.normal || (depth.get(r, cc) - depth.get(r, cc - 1)).abs() > 1e-9
                    });
                    assert!(near, "seed {seed} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn single_scanline_is_one_band() {
        let k = cam();
        let cfg = LidarConfig {
            n_scanlines: 1,
            elevation_top_deg: -10.0,
            ..LidarConfig::default()
        };
        let l = simulate_lidar(&flat_world(vec![]), &k, &cfg, 80.0, &mut rng(0));
        let rows: std::collections::BTreeSet<usize> = (0..l.len()).filter(|&i| l.data()[i] > 0.0).map(|i| i / k.width).collect();
        assert_eq!(rows.len(), 1);
        assert!(l.valid_count() > 30);
    }

    #[test]
    fn noiseless_lidar_equals_dense_gt() {
        let k = cam();
        for seed in 0..30 {
            let s = scene(seed);
            let gt = render_dense_depth(&s, &k, 80.0);
            let l = simulate_lidar(&s, &k, &LidarConfig::default(), 80.0, &mut rng(seed));
            assert!(l.valid_count() > 100);
            for i in 0..l.len() {
                if l.data()[i] > 0.0 {
                    assert!((l.data()[i] - gt.data()[i]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn noisy_lidar_stays_within_three_sigma() {
        let k = cam();
        let cfg = LidarConfig {
            sigma: 0.05,
            ..LidarConfig::default()
        };
        let s = scene(4);
        let gt = render_dense_depth(&s, &k, 80.0);
        let l = simulate_lidar(&s, &k, &cfg, 80.0, &mut rng(1));
        for i in 0..l.len() {
            if l.data()[i] > 0.0 {
                assert!((l.data()[i] - gt.data()[i]).abs() <= 0.15 + 1e-4);
            }
        }
    }

    #[test]
    fn lidar_support_concentrates_on_ring_rows() {
        let k = cam();
        let cfg = LidarConfig::default();
        let bands: std::collections::BTreeSet<usize> = cfg
            .ring_elevations_deg()
            .iter()
            .filter_map(|&e| beam_pixel(&k, e, 0.0).map(|p| p.0))
            .collect();
        let mut mass_in = 0usize;
        let mut mass = 0usize;
        for seed in 0..100 {
            let l = simulate_lidar(&scene(seed), &k, &cfg, 80.0, &mut rng(seed));
            for i in 0..l.len() {
                if l.data()[i] > 0.0 {
                    mass += 1;
                    mass_in += usize::from(bands.contains(&(i / k.width)));
                }
            }
        }
        assert!(bands.len() <= cfg.n_scanlines);
        assert!(mass_in as f64 >= 0.95 * mass as f64);
    }

    #[test]
    fn single_static_frame_matches_lidar() {
        let k = cam();
        let cfg = LidarConfig {
            sigma: 0.02,
            ..LidarConfig::default()
        };
        let s = scene(8);
        let a = accumulate_frames(&s, &k, &cfg, 80.0, 1, 0.0, &mut rng(3));
        let b = simulate_lidar(&s, &k, &cfg, 80.0, &mut rng(3));
        assert_eq!(a, b);
    }

    #[test]
    fn static_accumulation_is_exact_and_denser() {
        let k = cam();
        let cfg = LidarConfig::default();
        let s = scene(10);
        let gt = render_dense_depth(&s, &k, 80.0);
        let single = simulate_lidar(&s, &k, &cfg, 80.0, &mut rng(0));
        let acc = accumulate_frames(&s, &k, &cfg, 80.0, 25, 0.0, &mut rng(0));
        assert!(acc.valid_count() > 3 * single.valid_count());
        for i in 0..acc.len() {
            if acc.data()[i] > 0.0 {
                assert!((acc.data()[i] - gt.data()[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn moving_box_leaves_ghosts() {
        let k = cam();
        let mover = SceneObject {
            center: Point3::new(-3.0, 0.5, 12.0),
            half_extents: [1.0, 1.0, 1.0],
            class_id: 0,
            reflective: true,
            albedo: 0.5,
            velocity: Point3::new(0.5, 0.0, 0.0),
        };
        let s = flat_world(vec![mover]);
        let gt = render_dense_depth(&s, &k, 80.0);
        let acc = accumulate_frames(&s, &k, &LidarConfig::default(), 80.0, 25, 0.0, &mut rng(0));
        let valid = acc.valid_count();
        let ghosts = (0..acc.len()).filter(|&i| acc.data()[i] > 0.0 && (acc.data()[i] - gt.data()[i]).abs() > 0.5).count();
        assert!(ghosts as f64 >= 0.05 * valid as f64, "{ghosts}/{valid}");
    }

    #[test]
    fn downsampling_keeps_values_and_rate() {
        let mut s = SparseDepthImage::new(60, 60);
        for (i, v) in s.data_mut().iter_mut().enumerate() {
            *v = 1.0 + i as f32;
        }
        assert_eq!(downsample_lidar(&s, 1, &mut rng(0)), s);
        for seed in 0..50 {
            let d = downsample_lidar(&s, 60, &mut rng(seed));
            assert!((40..=90).contains(&d.valid_count()), "{}", d.valid_count());
            for i in 0..d.len() {
                assert!(d.data()[i] == 0.0 || d.data()[i] == s.data()[i]);
            }
        }
    }

    #[test]
    fn no_reflective_objects_no_radar() {
        let k = cam();
        let s = flat_world(vec![]);
        let hits = trace(&s, &k, 80.0);
        let scan = simulate_radar(&s, &k, &hits, &RadarConfig::default(), &mut rng(0));
        assert!(scan.points.is_empty());
    }

    #[test]
    fn radar_points_sit_on_reflective_surfaces() {
        let k = cam();
        let cfg = RadarConfig::default();
        assert_eq!(cfg.n_range, [50, 80]);
        let mut ys = Vec::new();
        for seed in 0..40 {
            let s = scene(seed);
            let hits = trace(&s, &k, 80.0);
            let scan = simulate_radar(&s, &k, &hits, &cfg, &mut rng(seed));
            let visible = hits.data().iter().any(|h| s.is_reflective(h.surface));
            assert!((50..=80).contains(&scan.points.len()) || !visible);
            for (p, t) in scan.points.iter().zip(&scan.truth) {
                // Ground-plane distance to the nearest reflective box footprint.
                let d = s
                    .objects
                    .iter()
                    .filter(|o| o.reflective)
                    .map(|o| {
                        let dx = ((p.x - o.center.x).abs() - o.half_extents[0]).max(0.0);
                        let dz = ((p.z - o.center.z).abs() - o.half_extents[2]).max(0.0);
                        dx.hypot(dz)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= 0.2 + 0.9 + 1e-9, "{d}");
                ys.push((p.y, t.y));
            }
        }
        let worst = ys.iter().map(|(y, t)| (y - t).abs()).fold(0.0, f64::max);
        assert!(worst > 1.1, "{worst}");
    }

    #[test]
    fn radar_elevation_is_uncorrelated_with_truth() {
        let k = cam();
        let mut pairs = Vec::new();
        let mut seed = 0;
        while pairs.len() < 10_000 {
            let s = scene(seed);
            let hits = trace(&s, &k, 80.0);
            let scan = simulate_radar(&s, &k, &hits, &RadarConfig::default(), &mut rng(seed + 1000));
            pairs.extend(scan.points.iter().zip(&scan.truth).map(|(p, t)| (p.y, t.y)));
            seed += 1;
        }
        let n = pairs.len() as f64;
        let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        let r = cov / (vx * vy).sqrt();
        assert!(r.abs() < 0.05, "{r}");
    }

    #[test]
    fn true_radar_points_land_in_the_mask() {
        let k = cam();
        let (mut inside, mut total) = (0, 0);
        for seed in 0..50 {
            let s = scene(seed);
            let hits = trace(&s, &k, 80.0);
            let mask = radar_aware_mask(&s, &k, 80.0);
            let grown = mask.dilate(2);
            let scan = simulate_radar(&s, &k, &hits, &RadarConfig::default(), &mut rng(seed));
            for p in &scan.truth {
                total += 1;
                if let Some(px) = crate::geometry::project_point(&k, *p) {
                    inside += usize::from(grown.get(px.row, px.col) == 1);
                }
            }
        }
        assert!(inside as f64 >= 0.95 * total as f64);
    }
}

//! Synthetic scenes and the camera, LiDAR and radar that observe them.

mod scene;
mod sensors;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use scene::{
    radar_aware_mask, render_dense_depth, sample_scene, trace, Hit, SceneConfig, SceneObject, SceneSpec, Surface,
    NUM_CLASSES, REFLECTIVE_CLASSES,
};
pub use sensors::{
    accumulate_frames, downsample_lidar, render_image, simulate_lidar, simulate_radar, ElevationModel, LidarConfig,
    RadarConfig, RadarScan,
};

use crate::error::{Error, Result};
use crate::geometry::{rasterize, CameraIntrinsics, Point3};
use crate::raster::{nearest_fill, BinaryMask, DenseDepthImage, IntensityImage, SparseDepthImage};

/// Which raster the trainer fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// The single-frame LiDAR sweep.
    #[default]
    SparseSingleFrame,
    /// Multi-frame stacking with pose jitter and unmodelled object motion.
    NoisyDenseAccumulated,
    /// Nearest-sample fill of the single-frame sweep.
    InterpolatedDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccumulationConfig {
    pub frames: usize,
    /// Per-axis standard deviation of the sensor position error in metres.
    pub jitter_sigma: f64,
}

impl Default for AccumulationConfig {
    fn default() -> Self {
        Self {
            frames: 25,
            jitter_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub height: usize,
    pub width: usize,
    pub hfov_deg: f64,
    pub max_range: f64,
    pub image_noise: f64,
    pub scene: SceneConfig,
    pub lidar: LidarConfig,
    pub radar: RadarConfig,
    pub accumulation: AccumulationConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 192,
            hfov_deg: 70.0,
            max_range: 80.0,
            image_noise: 0.01,
            scene: SceneConfig::default(),
            lidar: LidarConfig::default(),
            radar: RadarConfig::default(),
            accumulation: AccumulationConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(self.width, self.height, self.hfov_deg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("sim.height and sim.width must be positive"));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 170.0) {
            return Err(Error::config(format!("sim.hfov_deg {} outside (0, 170)", self.hfov_deg)));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config("sim.max_range must be positive"));
        }
        if self.lidar.n_scanlines == 0 {
            return Err(Error::config("sim.lidar.n_scanlines must be at least 1"));
        }
        let [lo, hi] = self.radar.n_range;
        if lo < 1 || hi > 500 || lo > hi {
            return Err(Error::config(format!("sim.radar.n_range {lo}..{hi} must lie within 1..500")));
        }
        if self.scene.min_objects > self.scene.max_objects {
            return Err(Error::config("sim.scene.min_objects exceeds max_objects"));
        }
        if self.accumulation.frames == 0 {
            return Err(Error::config("sim.accumulation.frames must be at least 1"));
        }
        Ok(())
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBundle {
    pub seed: u64,
    /// Camera matching every raster of the bundle (changes under resize/crop).
    pub intrinsics: CameraIntrinsics,
    pub image: IntensityImage,
    pub lidar: SparseDepthImage,
    pub radar_points: Vec<Point3>,
    /// On-surface positions the radar returns were measured from.
    pub radar_truth: Vec<Point3>,
    pub radar_raster: SparseDepthImage,
    pub mask: BinaryMask,
    pub dense_gt: DenseDepthImage,
    /// Supervision raster; equal to `lidar` for sparse supervision.
    pub target: SparseDepthImage,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Builds the bundle for one scene seed. Pure in `(cfg, seed, supervision)`.
pub fn generate_bundle(cfg: &SimConfig, seed: u64, supervision: Supervision) -> Result<SampleBundle> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let scene = sample_scene(&mut stream(seed, 1), &cfg.scene, &k, seed);
    let hits = trace(&scene, &k, cfg.max_range);
    let dense_gt = hits.map(|h| h.t as f32);
    let mask = scene::mask_from_hits(&hits);
    let image = sensors::image_from_hits(&scene, &hits, cfg.image_noise, &mut stream(seed, 2));
    let lidar = simulate_lidar(&scene, &k, &cfg.lidar, cfg.max_range, &mut stream(seed, 3));
    let scan = simulate_radar(&scene, &k, &hits, &cfg.radar, &mut stream(seed, 4));
    let radar_raster = rasterize(&scan.points, &k);
    let target = match supervision {
        Supervision::SparseSingleFrame => lidar.clone(),
        Supervision::InterpolatedDense => nearest_fill(&lidar),
        Supervision::NoisyDenseAccumulated => accumulate_frames(
            &scene,
            &k,
            &cfg.lidar,
            cfg.max_range,
            cfg.accumulation.frames,
            cfg.accumulation.jitter_sigma,
            &mut stream(seed, 3),
        ),
    };
    Ok(SampleBundle {
        seed,
        intrinsics: k,
        image,
        lidar,
        radar_points: scan.points,
        radar_truth: scan.truth,
        radar_raster,
        mask,
        dense_gt,
        target,
    })
}

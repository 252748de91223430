//! Losses, optimiser, augmentation and the single training step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::model::{ForwardVars, Model, ModelInput};
use crate::raster::{Grid, SparseDepthImage};
use crate::simsensor::{SampleBundle, Supervision};
use crate::tensor::{Graph, NamedTensor, Scalar, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub schedule: Schedule,
    /// Linear ramp from 0 to `lr` before the schedule starts.
    pub warmup_steps: usize,
    /// Optimiser steps; every step draws a fresh batch of scenes.
    pub steps: usize,
    pub batch_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda_mask: f64,
    pub supervision: Supervision,
    pub seed: u64,
    pub photometric_aug: bool,
    pub hflip_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            schedule: Schedule::Cosine,
            warmup_steps: 0,
            steps: 3000,
            batch_size: 8,
            lambda1: 1.0,
            lambda2: 0.5,
            lambda3: 0.25,
            lambda_mask: 0.1,
            supervision: Supervision::SparseSingleFrame,
            seed: 0,
            photometric_aug: true,
            hflip_prob: 0.5,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters of the published multi-GPU schedule, with epochs
    /// expressed as steps over a stream of fresh scenes.
    pub fn paper() -> Self {
        Self {
            lr: 7e-3,
            steps: 400 * 1000,
            batch_size: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3), ("lambda_mask", self.lambda_mask)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("train.{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config(format!("train.hflip_prob {} outside [0, 1]", self.hflip_prob)));
        }
        Ok(())
    }

    /// Pyramid weights in scale order `1, 1/2, 1/4`.
    pub fn lambdas(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }
}

/// Mean smooth-L1 over valid ground-truth pixels; zero when there are none.
pub fn smooth_l1(pred: &Grid<f32>, gt: &SparseDepthImage) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::usage(format!("smooth_l1: extents {:?} and {:?} differ", pred.dims(), gt.dims())));
    }
    let mut g = Graph::<f64>::new();
    let p = g.constant(Tensor::new(vec![pred.len()], pred.data().iter().map(|&v| v as f64).collect())?);
    let t = Tensor::new(vec![gt.len()], gt.data().iter().map(|&v| v as f64).collect())?;
    let l = g.masked_smooth_l1(p, &t)?;
    Ok(g.value(l).item().unwrap_or(0.0))
}

/// Downsamples sparse ground truth by `factor`, keeping a pixel whenever its
/// block holds a sample and taking the nearest (smallest) depth in the block.
pub fn downsample_min(sparse: &SparseDepthImage, factor: usize) -> SparseDepthImage {
    if factor <= 1 {
        return sparse.clone();
    }
    let (h, w) = (sparse.height() / factor, sparse.width() / factor);
    let mut out = SparseDepthImage::new(h, w);
    for r in 0..h * factor {
        for c in 0..w * factor {
            let v = sparse.get(r, c);
            if v > 0.0 {
                out.zbuffer_write(r / factor, c / factor, v);
            }
        }
    }
    out
}

/// Supervision tensors for one batch.
#[derive(Debug, Clone)]
pub struct Targets {
    /// `[N, 1, H/s, W/s]` per pyramid scale.
    pub depth: Vec<Tensor<f32>>,
    pub mask: Tensor<f32>,
}

/// `Σ λ_s · smoothL1_s + λ_mask · BCE`; the mask term only when the decoder is attached.
pub fn total_loss<T: Scalar>(g: &mut Graph<T>, out: &ForwardVars, targets: &Targets, cfg: &TrainConfig) -> Result<Var> {
    let lambdas = cfg.lambdas();
    let mut terms = Vec::new();
    for (i, (&pred, gt)) in out.depth.iter().zip(&targets.depth).enumerate() {
        let l = g.masked_smooth_l1(pred, &gt.cast())?;
        terms.push(g.scale(l, lambdas.get(i).copied().unwrap_or(0.0))?);
    }
    if let Some(logits) = out.mask_logits {
        let l = g.bce_with_logits(logits, &targets.mask.cast())?;
        terms.push(g.scale(l, cfg.lambda_mask)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(total)
}

/// Learning rate at `step` of `total`: a linear warmup over
/// `cfg.warmup_steps`, then either constant or a cosine decay that reaches 0
/// at `total`.
pub fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let w = cfg.warmup_steps.min(total);
    if step < w {
        return cfg.lr * (step + 1) as f64 / (w + 1) as f64;
    }
    match cfg.schedule {
        Schedule::Constant => cfg.lr,
        Schedule::Cosine => {
            let span = total - w;
            let t = if span == 0 { 1.0 } else { ((step - w) as f64 / span as f64).min(1.0) };
            0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[NamedTensor]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, params: &mut [NamedTensor], grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.tensor.data_mut().iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let step = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                *w = (*w as f64 - step) as f32;
            }
        }
    }
}

/// Horizontal mirror of a bundle: every raster flips, radar `x` changes sign
/// and the principal point mirrors.
pub fn hflip(b: &SampleBundle) -> SampleBundle {
    let mirror = |ps: &[Point3]| ps.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
    SampleBundle {
        seed: b.seed,
        intrinsics: b.intrinsics.flipped(),
        image: b.image.flip_horizontal(),
        lidar: b.lidar.flip_horizontal(),
        radar_points: mirror(&b.radar_points),
        radar_truth: mirror(&b.radar_truth),
        radar_raster: b.radar_raster.flip_horizontal(),
        mask: b.mask.flip_horizontal(),
        dense_gt: b.dense_gt.flip_horizontal(),
        target: b.target.flip_horizontal(),
    }
}

/// Random gain and offset on intensity, standing in for brightness/contrast jitter.
pub fn photometric(b: &mut SampleBundle, rng: &mut ChaCha8Rng) {
    let gain: f32 = rng.random_range(0.8..1.2);
    let offset: f32 = rng.random_range(-0.1..0.1);
    for v in b.image.data_mut() {
        *v = (*v * gain + offset).clamp(0.0, 1.0);
    }
}

pub fn augment(b: &SampleBundle, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> SampleBundle {
    let mut out = if cfg.hflip_prob > 0.0 && rng.random_bool(cfg.hflip_prob) { hflip(b) } else { b.clone() };
    if cfg.photometric_aug {
        photometric(&mut out, rng);
    }
    out
}

fn stack<T: Copy + Default>(grids: &[&Grid<T>], f: impl Fn(T) -> f32) -> Result<Tensor<f32>> {
    let (h, w) = grids[0].dims();
    if grids.iter().any(|g| g.dims() != (h, w)) {
        return Err(Error::config("batch rasters have different extents"));
    }
    let data = grids.iter().flat_map(|g| g.data().iter().map(|&v| f(v))).collect();
    Tensor::new(vec![grids.len(), 1, h, w], data)
}

/// Network input for a batch of (already disrupted and augmented) bundles.
pub fn batch_input(bundles: &[SampleBundle], use_radar: bool) -> Result<ModelInput> {
    if bundles.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let images: Vec<_> = bundles.iter().map(|b| &b.image).collect();
    let radar: Vec<_> = bundles.iter().map(|b| &b.radar_raster).collect();
    Ok(ModelInput {
        image: stack(&images, |v| v)?,
        radar: if use_radar { Some(stack(&radar, |v| v)?) } else { None },
        points: bundles.iter().map(|b| b.radar_points.clone()).collect(),
    })
}

pub fn batch_targets(bundles: &[SampleBundle], scales: &[usize]) -> Result<Targets> {
    let depth = scales
        .iter()
        .map(|&s| {
            let down: Vec<SparseDepthImage> = bundles.iter().map(|b| downsample_min(&b.target, s)).collect();
            stack(&down.iter().collect::<Vec<_>>(), |v| v)
        })
        .collect::<Result<Vec<_>>>()?;
    let masks: Vec<_> = bundles.iter().map(|b| &b.mask).collect();
    Ok(Targets { depth, mask: stack(&masks, f32::from)? })
}

/// One optimiser step on a prepared batch; returns the loss before the update.
pub fn step(
    model: &Model,
    params: &mut [NamedTensor],
    adam: &mut Adam,
    input: &ModelInput,
    targets: &Targets,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f64> {
    let mut g = Graph::<f32>::new();
    let vars = model.bind(&mut g, params, true)?;
    let loss = model
        .forward(&mut g, &vars, input)
        .and_then(|out| total_loss(&mut g, &out, targets, cfg))
        .map_err(|e| diverged(e, adam.steps_taken() as usize, lr, params))?;
    let value = g.value(loss).item().unwrap_or(f32::NAN) as f64;
    g.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| g.grad(v).map_or_else(|| vec![0.0; p.tensor.numel()], |s| s.iter().map(|&x| x as f64).collect()))
        .collect();
    if !value.is_finite() || grads.iter().flatten().any(|x| !x.is_finite()) {
        return Err(diverged(Error::NonFinite { op: "loss" }, adam.steps_taken() as usize, lr, params));
    }
    adam.update(params, &grads, lr);
    Ok(value)
}

fn diverged(e: Error, step: usize, lr: f64, params: &[NamedTensor]) -> Error {
    match e {
        Error::NonFinite { op } => {
            let worst = params
                .iter()
                .map(|p| (p.name.as_str(), p.tensor.data().iter().fold(0f32, |a, v| a.max(v.abs()))))
                .fold(("", 0f32), |a, b| if b.1 > a.1 { b } else { a });
            Error::Diverged {
                step,
                snapshot: format!("non-finite value in {op}; lr={lr:e}; largest |param| {} in `{}`", worst.1, worst.0),
            }
        }
        other => other,
    }
}

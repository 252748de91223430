//! Encoder-decoder depth network with multi-scale depth heads, the radar
//! position-injection MLP, and the detachable radar-aware mask decoder.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::raster::BinaryMask;
use crate::tensor::{sigmoid, Graph, NamedTensor, Scalar, Tensor, Var};

/// Where the injected radar descriptor joins the image features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Bottleneck,
    AllDecoderLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_channels: usize,
    /// Shallowest level first; every level after the first halves the resolution.
    pub encoder_channels: Vec<usize>,
    /// Deepest decoder stage first; the final entry is the 1-channel depth head.
    pub decoder_channels: Vec<usize>,
    pub mask_decoder_channels: Vec<usize>,
    pub injection_channels: Vec<usize>,
    /// Depth head resolutions as divisors of the input size, full resolution first.
    pub pyramid_scales: Vec<usize>,
    pub use_injection: bool,
    pub use_mask_decoder: bool,
    pub fusion: Fusion,
    /// One trunk per pyramid scale, each fed a downsampled input.
    pub separate_trunks: bool,
    pub max_range: f64,
    /// Multipliers applied to radar `(x, y, z)` before the injection MLP.
    pub point_scale: [f64; 3],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetworkConfig {
    pub fn desk() -> Self {
        Self {
            input_channels: 2,
            encoder_channels: vec![16, 32, 64],
            decoder_channels: vec![32, 16, 1],
            mask_decoder_channels: vec![16, 8, 1],
            injection_channels: vec![32, 64, 96, 64, 32, 8],
            pyramid_scales: vec![1, 2, 4],
            use_injection: false,
            use_mask_decoder: false,
            fusion: Fusion::Bottleneck,
            separate_trunks: false,
            max_range: 80.0,
            point_scale: [0.05, 0.5, 1.0 / 80.0],
        }
    }

    /// Channel widths at the published scale.
    pub fn paper() -> Self {
        Self {
            encoder_channels: vec![16, 64, 128, 256, 512],
            decoder_channels: vec![64, 16, 8, 8, 1],
            mask_decoder_channels: vec![64, 16, 8, 8, 1],
            use_injection: true,
            use_mask_decoder: true,
            ..Self::desk()
        }
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn injection_width(&self) -> usize {
        if self.use_injection {
            *self.injection_channels.last().unwrap_or(&0)
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels();
        let bad = |m: String| Err(Error::config(m));
        if l == 0 || self.encoder_channels.contains(&0) {
            return bad("network.encoder_channels must be non-empty and positive".into());
        }
        if self.input_channels == 0 {
            return bad("network.input_channels must be positive".into());
        }
        for (name, ch) in [("decoder_channels", &self.decoder_channels), ("mask_decoder_channels", &self.mask_decoder_channels)] {
            if ch.len() != l || ch.last() != Some(&1) || ch.contains(&0) {
                return bad(format!("network.{name} needs {l} positive entries ending in 1, got {ch:?}"));
            }
        }
        if self.use_injection && (self.injection_channels.is_empty() || self.injection_channels.contains(&0)) {
            return bad("network.injection_channels must be non-empty and positive".into());
        }
        if self.pyramid_scales.first() != Some(&1) {
            return bad(format!("network.pyramid_scales must start with 1, got {:?}", self.pyramid_scales));
        }
        for &s in &self.pyramid_scales {
            if ![1, 2, 4].contains(&s) {
                return bad(format!("network.pyramid_scales entry {s} is not one of 1, 2, 4"));
            }
            if !self.separate_trunks && s.trailing_zeros() as usize >= l.max(1) && s != 1 {
                return bad(format!("network.pyramid_scales entry {s} is coarser than the encoder bottleneck"));
            }
        }
        if !(self.max_range > 0.0) {
            return bad("network.max_range must be positive".into());
        }
        Ok(())
    }

    /// Required divisor of the input extents.
    pub fn size_multiple(&self) -> usize {
        let deepest = if self.separate_trunks { *self.pyramid_scales.iter().max().unwrap_or(&1) } else { 1 };
        deepest << (self.levels() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Network inputs for a batch. Rasters are `[N, 1, H, W]`.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub image: Tensor<f32>,
    pub radar: Option<Tensor<f32>>,
    pub points: Vec<Vec<Point3>>,
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Depth in metres per pyramid scale, in config order.
    pub depth: Vec<Var>,
    pub mask_logits: Option<Var>,
}

/// Materialised outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub depth_pred: Vec<Tensor<f32>>,
    pub mask_logits: Option<Tensor<f32>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    cfg: NetworkConfig,
    specs: Vec<ParamSpec>,
    index: HashMap<String, usize>,
}

const SLOPE: f64 = 0.1;

struct Layout<'a> {
    specs: &'a mut Vec<ParamSpec>,
}

impl Layout<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize) {
        self.specs.push(ParamSpec { name: format!("{name}.w"), shape: vec![cout, cin, 3, 3] });
        self.specs.push(ParamSpec { name: format!("{name}.b"), shape: vec![cout] });
    }

    fn dense(&mut self, name: &str, din: usize, dout: usize) {
        self.specs.push(ParamSpec { name: format!("{name}.w"), shape: vec![dout, din] });
        self.specs.push(ParamSpec { name: format!("{name}.b"), shape: vec![dout] });
    }
}

impl Model {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut specs = Vec::new();
        let mut lay = Layout { specs: &mut specs };
        let trunks = if cfg.separate_trunks { cfg.pyramid_scales.len() } else { 1 };
        for t in 0..trunks {
            let prefix = if cfg.separate_trunks { format!("t{t}.") } else { String::new() };
            Self::declare_trunk(&cfg, &mut lay, &prefix, t == 0 || !cfg.separate_trunks);
        }
        if cfg.use_injection {
            let mut din = 3;
            for (i, &d) in cfg.injection_channels.iter().enumerate() {
                lay.dense(&format!("inject.{i}"), din, d);
                din = d;
            }
        }
        if cfg.use_mask_decoder {
            let prefix = if cfg.separate_trunks { "t0." } else { "" };
            Self::declare_decoder(&cfg, &mut lay, &format!("{prefix}mask"), &cfg.mask_decoder_channels, 0);
        }
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Ok(Self { cfg, specs, index })
    }

    fn declare_trunk(cfg: &NetworkConfig, lay: &mut Layout, prefix: &str, with_pyramid: bool) {
        let mut cin = cfg.input_channels;
        for (l, &c) in cfg.encoder_channels.iter().enumerate() {
            lay.conv(&format!("{prefix}enc{l}.a"), cin, c);
            lay.conv(&format!("{prefix}enc{l}.b"), c, c);
            cin = c;
        }
        let fuse = cfg.injection_width();
        Self::declare_decoder(cfg, lay, &format!("{prefix}dec"), &cfg.decoder_channels, fuse);
        if with_pyramid && !cfg.separate_trunks {
            for &s in &cfg.pyramid_scales[1..] {
                let m = s.trailing_zeros() as usize;
                lay.conv(&format!("{prefix}head{s}"), Self::feature_channels(cfg, m, fuse), 1);
            }
        }
    }

    /// Channels of the decoder feature map at level `m` (resolution `1/2^m`).
    fn feature_channels(cfg: &NetworkConfig, m: usize, fuse: usize) -> usize {
        let l = cfg.levels();
        if m == l - 1 {
            cfg.encoder_channels[l - 1] + fuse
        } else {
            cfg.decoder_channels[l - 2 - m]
        }
    }

    /// Decoder stages `0..L-1` upsample and merge skips; the final entry is a
    /// full-resolution 1-channel head. `fuse` extra channels join the
    /// bottleneck and, for all-level fusion, every stage.
    fn declare_decoder(cfg: &NetworkConfig, lay: &mut Layout, prefix: &str, channels: &[usize], fuse: usize) {
        let l = cfg.levels();
        let stage_fuse = if cfg.fusion == Fusion::AllDecoderLevels { fuse } else { 0 };
        let mut cur = cfg.encoder_channels[l - 1] + fuse;
        for j in 0..l - 1 {
            let skip = cfg.encoder_channels[l - 2 - j];
            lay.conv(&format!("{prefix}{j}"), cur + skip + stage_fuse, channels[j]);
            cur = channels[j];
        }
        lay.conv(&format!("{prefix}.head"), cur, 1);
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// He-normal weights, zero biases; the depth heads start at half range.
    pub fn init_params(&self, seed: u64) -> Vec<NamedTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.specs
            .iter()
            .map(|s| {
                let tensor = if s.shape.len() == 1 {
                    Tensor::zeros(&s.shape)
                } else {
                    let fan_in: usize = s.shape[1..].iter().product();
                    let head = s.name.contains("head");
                    let std = if head { 0.01 } else { (2.0 / fan_in as f64).sqrt() };
                    let normal = Normal::new(0.0, std).expect("finite std");
                    Tensor::from_fn(&s.shape, |_| normal.sample(&mut rng) as f32)
                };
                NamedTensor { name: s.name.clone(), tensor }
            })
            .collect()
    }

    /// Checks a parameter list against this model's layout, naming the first difference.
    pub fn check_params(&self, params: &[NamedTensor]) -> Result<()> {
        for (p, s) in params.iter().zip(&self.specs) {
            if p.name != s.name || p.tensor.shape() != s.shape.as_slice() {
                return Err(Error::usage(format!(
                    "checkpoint parameter `{}` {:?} does not match network field `{}` {:?}",
                    p.name,
                    p.tensor.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        if let Some(extra) = params.get(self.specs.len()) {
            return Err(Error::usage(format!("checkpoint parameter `{}` has no matching network field", extra.name)));
        }
        if let Some(missing) = self.specs.get(params.len()) {
            return Err(Error::usage(format!("network field `{}` is missing from the checkpoint", missing.name)));
        }
        Ok(())
    }

    /// Puts the parameters on a graph in declaration order.
    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, params: &[NamedTensor], trainable: bool) -> Result<Vec<Var>> {
        self.check_params(params)?;
        Ok(params.iter().map(|p| g.leaf(p.tensor.cast(), trainable)).collect())
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.index[name]]
    }

    fn conv<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], name: &str, x: Var, stride: usize, act: bool) -> Result<Var> {
        let y = g.conv2d(x, self.var(vars, &format!("{name}.w")), stride, 1)?;
        let y = g.channel_bias(y, self.var(vars, &format!("{name}.b")))?;
        if act {
            g.leaky_relu(y, SLOPE)
        } else {
            Ok(y)
        }
    }

    /// Permutation-invariant radar descriptor per sample, `[N, D]`.
    pub fn inject<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], points: &[Vec<Point3>]) -> Result<Var> {
        let d = self.cfg.injection_width();
        if d == 0 {
            return Err(Error::usage("injection is disabled in this network"));
        }
        let ps = self.cfg.point_scale;
        let n_layers = self.cfg.injection_channels.len();
        let mut rows = Vec::with_capacity(points.len());
        for set in points {
            if set.is_empty() {
                rows.push(g.constant(Tensor::zeros(&[1, d])));
                continue;
            }
            let data: Vec<T> = set
                .iter()
                .flat_map(|p| [p.x * ps[0], p.y * ps[1], p.z * ps[2]])
                .map(T::from_f64)
                .collect();
            let mut h = g.constant(Tensor::new(vec![set.len(), 3], data)?);
            for i in 0..n_layers {
                h = g.linear(h, self.var(vars, &format!("inject.{i}.w")), self.var(vars, &format!("inject.{i}.b")))?;
                if i + 1 < n_layers {
                    h = g.relu(h)?;
                }
            }
            rows.push(g.mean_rows(h)?);
        }
        g.concat(&rows, 0)
    }

    fn encode<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], prefix: &str, x: Var) -> Result<Vec<Var>> {
        let mut feats = Vec::with_capacity(self.cfg.levels());
        let mut h = x;
        for l in 0..self.cfg.levels() {
            let stride = if l == 0 { 1 } else { 2 };
            h = self.conv(g, vars, &format!("{prefix}enc{l}.a"), h, stride, true)?;
            h = self.conv(g, vars, &format!("{prefix}enc{l}.b"), h, 1, true)?;
            feats.push(h);
        }
        Ok(feats)
    }

    /// Returns the full-resolution logit and the feature map at every level
    /// (index `m` has resolution `1/2^m`).
    fn decode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        prefix: &str,
        feats: &[Var],
        fuse: Option<Var>,
        fuse_all: bool,
    ) -> Result<(Var, Vec<Var>)> {
        let l = self.cfg.levels();
        let mut per_level = vec![feats[0]; l];
        let mut cur = feats[l - 1];
        if let Some(f) = fuse {
            let [_, _, h, w] = g.value(cur).dims4("bottleneck")?;
            let b = g.broadcast_spatial(f, h, w)?;
            cur = g.concat_channels(&[cur, b])?;
        }
        per_level[l - 1] = cur;
        for j in 0..l - 1 {
            let up = g.up2(cur)?;
            let mut parts = vec![up, feats[l - 2 - j]];
            if let (Some(f), true) = (fuse, fuse_all) {
                let [_, _, h, w] = g.value(up).dims4("decoder")?;
                parts.push(g.broadcast_spatial(f, h, w)?);
            }
            let merged = g.concat_channels(&parts)?;
            cur = self.conv(g, vars, &format!("{prefix}{j}"), merged, 1, true)?;
            per_level[l - 2 - j] = cur;
        }
        let logit = self.conv(g, vars, &format!("{prefix}.head"), cur, 1, false)?;
        Ok((logit, per_level))
    }

    fn to_depth<T: Scalar>(&self, g: &mut Graph<T>, logit: Var) -> Result<Var> {
        let s = g.sigmoid(logit)?;
        g.scale(s, self.cfg.max_range)
    }

    fn input_tensor<T: Scalar>(&self, g: &mut Graph<T>, input: &ModelInput) -> Result<Var> {
        let [_, c, h, w] = input.image.dims4("image input")?;
        if c != 1 {
            return Err(Error::config(format!("image input needs 1 channel, got {c}")));
        }
        let m = self.cfg.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::config(format!("input {h}x{w} is not divisible by {m} as the network depth requires")));
        }
        let image = g.constant(input.image.cast());
        let wants_radar = self.cfg.input_channels == 2;
        match (&input.radar, wants_radar) {
            (Some(r), true) => {
                if r.shape() != input.image.shape() {
                    return Err(Error::config(format!("radar raster {:?} differs from image {:?}", r.shape(), input.image.shape())));
                }
                let scale = 1.0 / self.cfg.max_range;
                let radar = g.constant(Tensor::from_fn(r.shape(), |i| T::from_f64(r.data()[i] as f64 * scale)));
                g.concat_channels(&[image, radar])
            }
            (None, false) => Ok(image),
            (Some(_), false) => Err(Error::config("radar raster supplied to a 1-channel network")),
            (None, true) => Err(Error::config("network expects a radar channel but none was supplied")),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], input: &ModelInput) -> Result<ForwardVars> {
        if vars.len() != self.specs.len() {
            return Err(Error::usage(format!("{} parameters bound, network declares {}", vars.len(), self.specs.len())));
        }
        let x = self.input_tensor(g, input)?;
        let fuse = if self.cfg.use_injection {
            if input.points.len() != g.shape(x)[0] {
                return Err(Error::config(format!("{} point sets for a batch of {}", input.points.len(), g.shape(x)[0])));
            }
            Some(self.inject(g, vars, &input.points)?)
        } else {
            None
        };
        let fuse_all = self.cfg.fusion == Fusion::AllDecoderLevels;
        let mut depth = Vec::with_capacity(self.cfg.pyramid_scales.len());
        let trunk0 = if self.cfg.separate_trunks { "t0." } else { "" };
        let feats0 = self.encode(g, vars, trunk0, x)?;
        let (logit, levels) = self.decode(g, vars, &format!("{trunk0}dec"), &feats0, fuse, fuse_all)?;
        depth.push(self.to_depth(g, logit)?);
        for (t, &s) in self.cfg.pyramid_scales.iter().enumerate().skip(1) {
            let m = s.trailing_zeros() as usize;
            let logit = if self.cfg.separate_trunks {
                let mut xs = x;
                for _ in 0..m {
                    xs = g.down2(xs)?;
                }
                let prefix = format!("t{t}.");
                let feats = self.encode(g, vars, &prefix, xs)?;
                self.decode(g, vars, &format!("{prefix}dec"), &feats, fuse, fuse_all)?.0
            } else {
                self.conv(g, vars, &format!("head{s}"), levels[m], 1, false)?
            };
            depth.push(self.to_depth(g, logit)?);
        }
        let mask_logits = if self.cfg.use_mask_decoder {
            Some(self.decode(g, vars, &format!("{trunk0}mask"), &feats0, None, false)?.0)
        } else {
            None
        };
        Ok(ForwardVars { depth, mask_logits })
    }

    /// Inference on `f32` parameters without gradient tracking.
    pub fn predict(&self, params: &[NamedTensor], input: &ModelInput) -> Result<ModelOutput> {
        let mut g = Graph::<f32>::new();
        let vars = self.bind(&mut g, params, false)?;
        let out = self.forward(&mut g, &vars, input)?;
        Ok(ModelOutput {
            depth_pred: out.depth.iter().map(|&v| g.value(v).clone()).collect(),
            mask_logits: out.mask_logits.map(|v| g.value(v).clone()),
        })
    }
}

/// Pixels where `sigmoid(logit) > 0.5` for the first sample of the batch.
pub fn predict_mask(out: &ModelOutput) -> Result<BinaryMask> {
    let logits = out
        .mask_logits
        .as_ref()
        .ok_or_else(|| Error::usage("predict_mask needs a network with the mask decoder enabled"))?;
    let [_, _, h, w] = logits.dims4("mask logits")?;
    let data = logits.data()[..h * w].iter().map(|&z| u8::from(sigmoid(z) > 0.5)).collect();
    BinaryMask::from_vec(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn input(n: usize, h: usize, w: usize, seed: u64) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelInput {
            image: Tensor::from_fn(&[n, 1, h, w], |_| rng.random_range(0.0..1.0)),
            radar: Some(Tensor::from_fn(&[n, 1, h, w], |i| if i % 17 == 0 { 12.0 } else { 0.0 })),
            points: (0..n)
                .map(|i| (0..5 + i).map(|j| Point3::new(j as f64 - 2.0, 1.0, 10.0 + j as f64)).collect())
                .collect(),
        }
    }

    fn full() -> NetworkConfig {
        NetworkConfig {
            use_injection: true,
            use_mask_decoder: true,
            ..NetworkConfig::desk()
        }
    }

    /// Independent count from the channel lists.
    fn closed_form(cfg: &NetworkConfig) -> usize {
        let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
        let e = &cfg.encoder_channels;
        let l = e.len();
        let inj = if cfg.use_injection { *cfg.injection_channels.last().unwrap() } else { 0 };
        let mut total = 0;
        let mut cin = cfg.input_channels;
        for &c in e {
            total += conv(cin, c) + conv(c, c);
            cin = c;
        }
        let decoder = |ch: &[usize], fuse: usize| {
            let mut cur = e[l - 1] + fuse;
            let mut t = 0;
            for j in 0..l - 1 {
                t += conv(cur + e[l - 2 - j], ch[j]);
                cur = ch[j];
            }
            t + conv(cur, 1)
        };
        total += decoder(&cfg.decoder_channels, inj);
        // A pyramid head at 1/2^m reads the decoder stage of that size, or
        // the fused bottleneck when that is the coarsest level.
        for m in [1, 2] {
            let cin = if m == l - 1 { e[l - 1] + inj } else { cfg.decoder_channels[l - 2 - m] };
            total += conv(cin, 1);
        }
        if cfg.use_injection {
            let mut din = 3;
            for &d in &cfg.injection_channels {
                total += din * d + d;
                din = d;
            }
        }
        if cfg.use_mask_decoder {
            total += decoder(&cfg.mask_decoder_channels, 0);
        }
        total
    }

    #[test]
    fn large_preset_parameter_count_matches_closed_form() {
        let cfg = NetworkConfig::paper();
        assert_eq!(cfg.encoder_channels.iter().rev().copied().collect::<Vec<_>>(), vec![512, 256, 128, 64, 16]);
        assert_eq!(cfg.decoder_channels, vec![64, 16, 8, 8, 1]);
        assert_eq!(cfg.injection_channels, vec![32, 64, 96, 64, 32, 8]);
        let m = Model::new(cfg.clone()).unwrap();
        assert_eq!(m.param_count(), closed_form(&cfg));
        let desk = full();
        assert_eq!(Model::new(desk.clone()).unwrap().param_count(), closed_form(&desk));
    }

    #[test]
    fn zero_weights_predict_half_range() {
        let m = Model::new(full()).unwrap();
        let params: Vec<NamedTensor> = m
            .init_params(0)
            .into_iter()
            .map(|p| NamedTensor { tensor: Tensor::zeros(p.tensor.shape()), ..p })
            .collect();
        let out = m.predict(&params, &input(2, 16, 24, 1)).unwrap();
        for d in &out.depth_pred {
            assert!(d.data().iter().all(|&v| v == 40.0));
        }
    }

    #[test]
    fn head_extents_follow_scales() {
        let m = Model::new(full()).unwrap();
        let out = m.predict(&m.init_params(3), &input(2, 16, 24, 1)).unwrap();
        assert_eq!(out.depth_pred[0].shape(), &[2, 1, 16, 24]);
        assert_eq!(out.depth_pred[1].shape(), &[2, 1, 8, 12]);
        assert_eq!(out.depth_pred[2].shape(), &[2, 1, 4, 6]);
        assert_eq!(out.mask_logits.as_ref().unwrap().shape(), &[2, 1, 16, 24]);
        for d in &out.depth_pred {
            assert!(d.data().iter().all(|&v| v > 0.0 && v <= 80.0));
        }
    }

    #[test]
    fn indivisible_input_is_a_config_error() {
        let m = Model::new(full()).unwrap();
        let err = m.predict(&m.init_params(0), &input(1, 18, 24, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn detached_mask_branch_leaves_depth_bitwise_identical() {
        let with = Model::new(full()).unwrap();
        let without = Model::new(NetworkConfig { use_mask_decoder: false, ..full() }).unwrap();
        let params = with.init_params(11);
        let shared: Vec<NamedTensor> = params.iter().filter(|p| !p.name.starts_with("mask")).cloned().collect();
        let x = input(2, 16, 24, 4);
        let a = with.predict(&params, &x).unwrap();
        let b = without.predict(&shared, &x).unwrap();
        for (p, q) in a.depth_pred.iter().zip(&b.depth_pred) {
            assert!(p.data().iter().zip(q.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert!(b.mask_logits.is_none());
    }

    #[test]
    fn injection_is_permutation_invariant_and_zero_when_empty() {
        let m = Model::new(full()).unwrap();
        let params = m.init_params(5);
        let mut pts: Vec<Point3> = (0..9).map(|i| Point3::new(i as f64 * 0.7 - 3.0, 0.9, 5.0 + 3.0 * i as f64)).collect();
        let run = |sets: &[Vec<Point3>]| {
            let mut g = Graph::<f64>::new();
            let vars = m.bind(&mut g, &params, false).unwrap();
            let v = m.inject(&mut g, &vars, sets).unwrap();
            g.value(v).clone()
        };
        let a = run(&[pts.clone(), vec![]]);
        pts.reverse();
        pts.swap(0, 4);
        let b = run(&[pts, vec![]]);
        assert_eq!(a.shape(), &[2, 8]);
        for i in 0..8 {
            assert!((a.data()[i] - b.data()[i]).abs() < 1e-12);
            assert_eq!(a.data()[8 + i], 0.0);
        }
    }

    #[test]
    fn mask_threshold_is_strict() {
        let mk = |v: f32| ModelOutput {
            depth_pred: vec![],
            mask_logits: Some(Tensor::full(&[1, 1, 3, 4], v)),
        };
        assert_eq!(predict_mask(&mk(0.0)).unwrap().count_ones(), 0);
        assert_eq!(predict_mask(&mk(10.0)).unwrap().count_ones(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = Tensor::from_fn(&[1, 1, 5, 5], |_| rng.random_range(-3.0..3.0));
        let m = predict_mask(&ModelOutput { depth_pred: vec![], mask_logits: Some(logits.clone()) }).unwrap();
        for (i, &z) in logits.data().iter().enumerate() {
            assert_eq!(m.data()[i] == 1, 1.0 / (1.0 + (-z as f64).exp()) > 0.5);
        }
        let none = ModelOutput { depth_pred: vec![], mask_logits: None };
        assert!(matches!(predict_mask(&none), Err(Error::Usage(_))));
    }

    #[test]
    fn separate_trunks_and_all_level_fusion_run() {
        for cfg in [
            NetworkConfig { separate_trunks: true, ..full() },
            NetworkConfig { fusion: Fusion::AllDecoderLevels, ..full() },
        ] {
            let m = Model::new(cfg).unwrap();
            let out = m.predict(&m.init_params(1), &input(1, 16, 32, 2)).unwrap();
            assert_eq!(out.depth_pred[2].shape(), &[1, 1, 4, 8]);
        }
    }

    #[test]
    fn mono_network_rejects_radar_channel() {
        let m = Model::new(NetworkConfig { input_channels: 1, ..NetworkConfig::desk() }).unwrap();
        let x = input(1, 16, 24, 0);
        assert!(m.predict(&m.init_params(0), &x).is_err());
        let mono = ModelInput { radar: None, ..x };
        assert!(m.predict(&m.init_params(0), &mono).is_ok());
    }
}

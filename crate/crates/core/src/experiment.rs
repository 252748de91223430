//! Running experiments end to end: data streams, the training loop, the
//! held-out benchmark, presets and the comparison suites built from them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DepthSource, ExperimentConfig};
use crate::disruption::{self, DisruptionConfig, Mode3d};
use crate::error::{Error, Result};
use crate::eval::{aggregate, scene_metrics, MetricsRecord};
use crate::formats::{encode_pgm, encode_ppm, metrics_csv, write_bytes, write_text};
use crate::model::{Model, ModelInput};
use crate::raster::Grid;
use crate::simsensor::{downsample_lidar, generate_bundle, SampleBundle, Supervision};
use crate::tensor::{read_checkpoint, write_checkpoint, NamedTensor};
use crate::train::{augment, batch_input, batch_targets, learning_rate, step, Adam, Targets};

/// Training scene seeds stay below this bound; benchmark seeds default to it.
pub const TRAIN_SEED_LIMIT: u64 = 1 << 40;

pub const TRAIN_LOG_HEADER: &str = "step,lr,loss";
pub const CHECKPOINT_FILE: &str = "checkpoint.dcw";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed of batch slot `slot` at optimiser step `step`.
pub fn training_scene_seed(train_seed: u64, step: usize, slot: usize) -> u64 {
    splitmix(splitmix(splitmix(train_seed) ^ step as u64) ^ ((slot as u64) << 32)) % TRAIN_SEED_LIMIT
}

/// Randomness used to disrupt and augment one scene, independent of the
/// simulator's own streams.
fn scene_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5EED_0F_D157));
    rng.set_stream(16 + purpose);
    rng
}

/// Replaces the radar with thinned LiDAR when the experiment asks for it.
fn select_depth_input(mut b: SampleBundle, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> SampleBundle {
    if cfg.uses_depth_input() && cfg.input.depth_source == DepthSource::SparseLidar {
        b.radar_raster = downsample_lidar(&b.lidar, cfg.input.lidar_downsample, rng);
        b.radar_points.clear();
        b.radar_truth.clear();
    }
    b
}

/// One fully prepared training example: simulated, input-selected, disrupted
/// and augmented.
pub fn training_sample(cfg: &ExperimentConfig, scene_seed: u64) -> Result<SampleBundle> {
    let b = generate_bundle(&cfg.sim, scene_seed, cfg.train.supervision)?;
    let mut rng = scene_rng(scene_seed, 0);
    let b = select_depth_input(b, cfg, &mut rng);
    let b = disruption::apply(&b, &cfg.disruption, &mut rng)?;
    Ok(augment(&b, &cfg.train, &mut rng))
}

/// Benchmark scene `index`: no resize-crop or augmentation, but the radar
/// disruption the network was trained with, drawn deterministically per scene.
pub fn benchmark_sample(cfg: &ExperimentConfig, index: usize) -> Result<SampleBundle> {
    let seed = cfg.eval.seed_base + index as u64;
    let b = generate_bundle(&cfg.sim, seed, Supervision::SparseSingleFrame)?;
    let mut rng = scene_rng(seed, 1);
    let b = select_depth_input(b, cfg, &mut rng);
    let radar_only = DisruptionConfig {
        enable_2d: false,
        ..cfg.disruption.clone()
    };
    disruption::apply(&b, &radar_only, &mut rng)
}

struct Batch {
    input: ModelInput,
    targets: Targets,
}

fn make_batch(cfg: &ExperimentConfig, step: usize) -> Result<Batch> {
    let bundles = (0..cfg.train.batch_size)
        .map(|slot| training_sample(cfg, training_scene_seed(cfg.train.seed, step, slot)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        input: batch_input(&bundles, cfg.uses_depth_input())?,
        targets: batch_targets(&bundles, &cfg.network.pyramid_scales)?,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: Vec<NamedTensor>,
    pub log: Vec<LogRow>,
}

/// Trains a fresh network. Batches are produced by `jobs` generator threads
/// (inline when `jobs <= 1`); results do not depend on `jobs`.
pub fn train_model(cfg: &ExperimentConfig, jobs: usize, progress: &mut dyn FnMut(&LogRow)) -> Result<Trained> {
    cfg.validate()?;
    let model = Model::new(cfg.network.clone())?;
    let mut params = model.init_params(cfg.train.seed);
    let mut adam = Adam::new(&params);
    let total = cfg.train.steps;
    let mut log = Vec::with_capacity(total);
    let mut consume = |s: usize, batch: Batch, params: &mut Vec<NamedTensor>| -> Result<()> {
        let lr = learning_rate(&cfg.train, s, total);
        let loss = step(&model, params, &mut adam, &batch.input, &batch.targets, &cfg.train, lr)?;
        let row = LogRow { step: s, lr, loss };
        progress(&row);
        log.push(row);
        Ok(())
    };

    if jobs <= 1 {
        for s in 0..total {
            consume(s, make_batch(cfg, s)?, &mut params)?;
        }
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let receivers: Vec<Receiver<Result<Batch>>> = (0..jobs)
                .map(|w| {
                    let (tx, rx) = sync_channel(2);
                    scope.spawn(move || {
                        for s in (w..total).step_by(jobs) {
                            if tx.send(make_batch(cfg, s)).is_err() {
                                break;
                            }
                        }
                    });
                    rx
                })
                .collect();
            for s in 0..total {
                let batch = receivers[s % jobs]
                    .recv()
                    .map_err(|_| Error::usage("batch generator stopped early"))??;
                consume(s, batch, &mut params)?;
            }
            Ok(())
        })?;
    }
    Ok(Trained { params, log })
}

/// Prediction and references for one benchmark scene.
#[derive(Debug, Clone)]
pub struct SceneView {
    pub seed: u64,
    pub pred: Grid<f32>,
    pub dense_gt: Grid<f32>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Per-scene rows in seed order, then the aggregate rows.
    pub records: Vec<MetricsRecord>,
    /// The first `eval.viz_scenes` scenes.
    pub views: Vec<SceneView>,
}

impl Evaluation {
    /// The aggregate row at `cap`.
    pub fn mean(&self, cap: f64) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| r.seed.is_none() && r.cap_m == cap)
    }
}

fn evaluate_scene(cfg: &ExperimentConfig, model: &Model, params: &[NamedTensor], index: usize) -> Result<(Vec<MetricsRecord>, SceneView)> {
    let b = benchmark_sample(cfg, index)?;
    let out = model.predict(params, &batch_input(std::slice::from_ref(&b), cfg.uses_depth_input())?)?;
    let full = &out.depth_pred[0];
    let (h, w) = b.dense_gt.dims();
    let pred = Grid::from_vec(h, w, full.data().to_vec())?;
    let records = scene_metrics(&cfg.name, b.seed, &pred, &b.dense_gt, &b.lidar.support())?;
    Ok((records, SceneView { seed: b.seed, pred, dense_gt: b.dense_gt }))
}

/// Scores `params` on the benchmark scenes of `cfg`.
pub fn evaluate(cfg: &ExperimentConfig, params: &[NamedTensor], jobs: usize) -> Result<Evaluation> {
    cfg.validate()?;
    let model = Model::new(cfg.network.clone())?;
    model.check_params(params)?;
    let n = cfg.eval.n_scenes;
    let jobs = jobs.clamp(1, n);
    let mut per_scene: BTreeMap<usize, (Vec<MetricsRecord>, SceneView)> = BTreeMap::new();
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let model = &model;
                scope.spawn(move || {
                    (w..n)
                        .step_by(jobs)
                        .map(|i| evaluate_scene(cfg, model, params, i).map(|r| (i, r)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            per_scene.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(())
    })?;
    let mut records: Vec<MetricsRecord> = Vec::with_capacity(per_scene.len() * 4);
    let mut views = Vec::new();
    for (i, (rows, view)) in per_scene {
        records.extend(rows);
        if i < cfg.eval.viz_scenes {
            views.push(view);
        }
    }
    let agg = aggregate(&cfg.name, &records);
    records.extend(agg);
    Ok(Evaluation { records, views })
}

pub fn train_log_csv(log: &[LogRow]) -> String {
    let mut s = String::from(TRAIN_LOG_HEADER);
    s.push('\n');
    for r in log {
        s.push_str(&format!("{},{},{}\n", r.step, r.lr, r.loss));
    }
    s
}

pub fn save_checkpoint(path: &Path, params: &[NamedTensor]) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, params)?;
    write_bytes(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::usage(format!("cannot read checkpoint {}: {e}", path.display())))?;
    read_checkpoint(bytes.as_slice())
}

/// Writes the metrics CSV and the greyscale and colour depth images of each
/// visualised scene.
pub fn write_evaluation(dir: &Path, cfg: &ExperimentConfig, ev: &Evaluation) -> Result<()> {
    write_text(&dir.join(METRICS_FILE), &metrics_csv(&ev.records))?;
    let range = cfg.sim.max_range;
    for v in &ev.views {
        write_bytes(&dir.join(format!("scene_{}_pred.pgm", v.seed)), &encode_pgm(&v.pred, range))?;
        write_bytes(&dir.join(format!("scene_{}_pred.ppm", v.seed)), &encode_ppm(&v.pred, range))?;
        write_bytes(&dir.join(format!("scene_{}_gt.ppm", v.seed)), &encode_ppm(&v.dense_gt, range))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trained: Trained,
    pub evaluation: Evaluation,
}

/// Trains and evaluates one configuration.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize, progress: &mut dyn FnMut(&LogRow)) -> Result<RunResult> {
    let trained = train_model(cfg, jobs, progress)?;
    let evaluation = evaluate(cfg, &trained.params, jobs)?;
    Ok(RunResult { trained, evaluation })
}

/// Writes the checkpoint, training log, metrics, images and resolved config.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, run: &RunResult) -> Result<()> {
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &run.trained.params)?;
    write_text(&dir.join(TRAIN_LOG_FILE), &train_log_csv(&run.trained.log))?;
    write_text(&dir.join(CONFIG_FILE), &(cfg.to_json() + "\n"))?;
    write_evaluation(dir, cfg, &run.evaluation)
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 15] = [
    "mono_sparse_no_disruption",
    "mono_sparse_2d",
    "radar_no_disruption",
    "radar_2d",
    "radar_2d_lift",
    "radar_2d_random_height",
    "radar_injection",
    "full_framework",
    "dense_accumulated",
    "dense_interpolated",
    "lidar60_no_disruption",
    "lidar60_2d",
    "tiny",
    "desk",
    "paper",
];

/// Shared desk-scale settings every preset starts from.
pub fn desk_base() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.name = "desk".into();
    cfg.sim.height = 64;
    cfg.sim.width = 96;
    cfg.sim.scene.moving_objects = 1;
    cfg.sim.lidar.n_scanlines = 7;
    cfg.network.encoder_channels = vec![8, 16, 32, 64];
    cfg.network.decoder_channels = vec![32, 16, 8, 1];
    cfg.network.mask_decoder_channels = vec![16, 8, 8, 1];
    cfg.train.lr = 1e-3;
    cfg.train.warmup_steps = 50;
    cfg.train.steps = 1000;
    cfg.train.batch_size = 4;
    cfg
}

fn with_2d(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.disruption.enable_2d = true;
    cfg
}

fn with_3d(mut cfg: ExperimentConfig, mode: Mode3d) -> ExperimentConfig {
    cfg.disruption.enable_3d = true;
    cfg.disruption.mode_3d = mode;
    cfg
}

fn mono(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.network.input_channels = 1;
    cfg
}

fn compensated(mut cfg: ExperimentConfig, injection: bool, mask: bool) -> ExperimentConfig {
    cfg.network.use_injection = injection;
    cfg.network.use_mask_decoder = mask;
    cfg
}

fn lidar_input(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.input.depth_source = DepthSource::SparseLidar;
    cfg
}

/// A named experiment configuration.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let b = desk_base;
    let mut cfg = match name {
        "desk" => b(),
        "mono_sparse_no_disruption" => mono(b()),
        "mono_sparse_2d" => with_2d(mono(b())),
        "radar_no_disruption" => b(),
        "radar_2d" => with_2d(b()),
        "radar_2d_lift" => with_3d(with_2d(b()), Mode3d::Lift),
        "radar_2d_random_height" => with_3d(with_2d(b()), Mode3d::RandomHeight),
        "radar_injection" => compensated(with_3d(with_2d(b()), Mode3d::Lift), true, false),
        "full_framework" => compensated(with_3d(with_2d(b()), Mode3d::Lift), true, true),
        "dense_accumulated" | "dense_interpolated" => {
            let mut c = compensated(b(), true, true);
            c.train.supervision = if name == "dense_accumulated" {
                Supervision::NoisyDenseAccumulated
            } else {
                Supervision::InterpolatedDense
            };
            c
        }
        "lidar60_no_disruption" => lidar_input(b()),
        "lidar60_2d" => with_2d(lidar_input(b())),
        "tiny" => {
            let mut c = compensated(with_3d(with_2d(b()), Mode3d::Lift), true, true);
            c.sim.height = 32;
            c.sim.width = 48;
            c.train.steps = 4;
            c.train.batch_size = 2;
            c.train.warmup_steps = 1;
            c.eval.n_scenes = 2;
            c.eval.viz_scenes = 1;
            c
        }
        "paper" => {
            let mut c = ExperimentConfig::default();
            c.network = crate::model::NetworkConfig::paper();
            c.train = crate::train::TrainConfig::paper();
            with_3d(with_2d(c), Mode3d::Lift)
        }
        other => {
            return Err(Error::usage(format!("unknown preset {other:?}; known presets: {}", PRESETS.join(", "))));
        }
    };
    cfg.name = name.to_string();
    cfg.validate()?;
    Ok(cfg)
}

/// One cell of a comparison: a label and the configuration it trains.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: &'static str,
    pub config: ExperimentConfig,
}

/// The six cells of the stripe-artifact demonstration.
pub fn ptc_matrix() -> Result<Vec<Cell>> {
    [
        ("mono", "mono_sparse_no_disruption"),
        ("mono+2d", "mono_sparse_2d"),
        ("radar", "radar_no_disruption"),
        ("radar+2d", "radar_2d"),
        ("radar+2d+lift", "radar_2d_lift"),
        ("radar+2d+random_height", "radar_2d_random_height"),
    ]
    .into_iter()
    .map(|(label, p)| Ok(Cell { label, config: preset(p)? }))
    .collect()
}

/// Ablation suites, each a list of rows in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Disruption on/off for image-only, image+radar and image+thinned LiDAR.
    Disruption,
    /// Disruption alone, then adding injection, then the mask decoder.
    Compensation,
    /// Dense accumulated and interpolated supervision against sparse plus disruption.
    Supervision,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Disruption, Suite::Compensation, Suite::Supervision];

    pub fn file_stem(self) -> &'static str {
        match self {
            Suite::Disruption => "ablation_disruption",
            Suite::Compensation => "ablation_compensation",
            Suite::Supervision => "ablation_supervision",
        }
    }

    pub fn rows(self) -> Result<Vec<Cell>> {
        let rows: &[(&'static str, &str)] = match self {
            Suite::Disruption => &[
                ("no_disruption/img", "mono_sparse_no_disruption"),
                ("no_disruption/img+radar", "radar_no_disruption"),
                ("disruption/img+radar", "radar_2d_lift"),
                ("no_disruption/img+lidar60", "lidar60_no_disruption"),
                ("disruption/img+lidar60", "lidar60_2d"),
            ],
            Suite::Compensation => &[
                ("baseline", "radar_2d_lift"),
                ("+injection", "radar_injection"),
                ("+injection+mask", "full_framework"),
            ],
            Suite::Supervision => &[
                ("accumulated_dense", "dense_accumulated"),
                ("interpolated_dense", "dense_interpolated"),
                ("sparse+disruption", "full_framework"),
            ],
        };
        rows.iter().map(|&(label, p)| Ok(Cell { label, config: preset(p)? })).collect()
    }
}

/// `cfg` retargeted to another training seed; benchmark scenes are unchanged.
pub fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.seed = seed;
    c
}

/// Scalar summary of one run at the widest cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub mae_mm: f64,
    pub rmse_mm: f64,
    pub artifact_ratio: f64,
    pub stripe_score: f64,
}

impl CellScore {
    pub fn from_evaluation(ev: &Evaluation) -> Result<Self> {
        let cap = crate::eval::CAPS_M[crate::eval::CAPS_M.len() - 1];
        let m = ev.mean(cap).ok_or_else(|| Error::usage("evaluation has no aggregate row"))?;
        Ok(Self {
            mae_mm: m.mae_mm,
            rmse_mm: m.rmse_mm,
            artifact_ratio: m.artifact_ratio,
            stripe_score: m.stripe_score,
        })
    }
}

/// Summary CSV of the demonstration matrix, one line per cell.
pub fn ptc_summary_csv(cells: &[(&str, CellScore)]) -> String {
    let mut s = String::from("cell,mae_mm,rmse_mm,artifact_ratio,stripe_score\n");
    for (label, c) in cells {
        s.push_str(&format!("{label},{},{},{},{}\n", c.mae_mm, c.rmse_mm, c.artifact_ratio, c.stripe_score));
    }
    s
}

/// Ablation CSV: one line per row with the value of every seed and their mean.
pub fn ablation_csv(metric: &str, seeds: &[u64], rows: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::from("row,metric");
    for seed in seeds {
        s.push_str(&format!(",seed_{seed}"));
    }
    s.push_str(",mean\n");
    for (label, values) in rows {
        s.push_str(&format!("{label},{metric}"));
        for v in values {
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{}\n", values.iter().sum::<f64>() / values.len().max(1) as f64));
    }
    s
}

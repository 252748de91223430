//! Depth error metrics and the scanline-artifact diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{distance_transform, BinaryMask, Grid};

/// Range caps in metres used for every report.
pub const CAPS_M: [f64; 3] = [50.0, 70.0, 80.0];
/// Guard added to both MAEs of the artifact ratio, in millimetres.
pub const RATIO_EPS_MM: f64 = 1.0;

fn check_dims<A: Copy + Default, B: Copy + Default>(a: &Grid<A>, b: &Grid<B>, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::usage(format!("{what}: extents {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

/// MAE and RMSE in millimetres over valid ground truth within `cap` metres.
/// Returns `None` when no pixel qualifies.
pub fn mae_rmse(pred: &Grid<f32>, gt: &Grid<f32>, cap: f64) -> Result<Option<(f64, f64)>> {
    check_dims(pred, gt, "mae_rmse")?;
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if g > 0.0 && g as f64 <= cap {
            let e = (p as f64 - g as f64).abs();
            abs += e;
            sq += e * e;
            n += 1;
        }
    }
    Ok((n > 0).then(|| (abs / n as f64 * 1000.0, (sq / n as f64).sqrt() * 1000.0)))
}

/// Dense-GT error split by LiDAR support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportSplit {
    pub mae_on_mm: f64,
    /// `None` when every pixel within the cap is supported.
    pub mae_off_mm: Option<f64>,
    pub n_on: usize,
    pub n_off: usize,
}

impl SupportSplit {
    /// `(off + ε) / (on + ε)`; an empty off-support set counts as zero error.
    pub fn artifact_ratio(&self) -> f64 {
        (self.mae_off_mm.unwrap_or(0.0) + RATIO_EPS_MM) / (self.mae_on_mm + RATIO_EPS_MM)
    }
}

pub fn support_split_mae(pred: &Grid<f32>, dense_gt: &Grid<f32>, support: &BinaryMask, cap: f64) -> Result<SupportSplit> {
    check_dims(pred, dense_gt, "support_split_mae")?;
    check_dims(pred, support, "support_split_mae")?;
    let (mut on, mut off, mut n_on, mut n_off) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..pred.len() {
        let g = dense_gt.data()[i];
        if !(g > 0.0 && g as f64 <= cap) {
            continue;
        }
        let e = (pred.data()[i] as f64 - g as f64).abs();
        if support.data()[i] != 0 {
            on += e;
            n_on += 1;
        } else {
            off += e;
            n_off += 1;
        }
    }
    if n_on == 0 {
        return Err(Error::usage("support_split_mae: no supported pixel within the cap"));
    }
    Ok(SupportSplit {
        mae_on_mm: on / n_on as f64 * 1000.0,
        mae_off_mm: (n_off > 0).then(|| off / n_off as f64 * 1000.0),
        n_on,
        n_off,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Correlation between `|error|` and the Euclidean distance to the nearest
/// supported pixel, over pixels where `include` is set (all pixels when `None`).
/// Zero when either quantity is constant or the support is empty.
pub fn stripe_score_masked(error: &Grid<f64>, support: &BinaryMask, include: Option<&BinaryMask>) -> Result<f64> {
    check_dims(error, support, "stripe_score")?;
    let Some(dist) = distance_transform(support) else { return Ok(0.0) };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..error.len() {
        if include.is_none_or(|m| m.data()[i] != 0) {
            xs.push(error.data()[i].abs());
            ys.push(dist.data()[i]);
        }
    }
    Ok(pearson(&xs, &ys))
}

pub fn stripe_score(error: &Grid<f64>, support: &BinaryMask) -> Result<f64> {
    stripe_score_masked(error, support, None)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    /// Scene seed, or `None` for the aggregate row.
    pub seed: Option<u64>,
    pub cap_m: f64,
    pub mae_mm: f64,
    pub rmse_mm: f64,
    pub mae_on_mm: f64,
    pub mae_off_mm: f64,
    pub artifact_ratio: f64,
    pub stripe_score: f64,
    pub n_pixels: usize,
    pub n_on: usize,
    pub n_off: usize,
}

pub const CSV_HEADER: &str = "experiment,seed,cap_m,mae_mm,rmse_mm,mae_on_mm,mae_off_mm,artifact_ratio,stripe_score";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let seed = self.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment, seed, self.cap_m, self.mae_mm, self.rmse_mm, self.mae_on_mm, self.mae_off_mm, self.artifact_ratio, self.stripe_score
        )
    }
}

/// All metrics of one scene at every cap. Pixels outside a cap are excluded
/// from that cap's error statistics and stripe score; a cap with no pixel or no
/// supported pixel reports NaN.
pub fn scene_metrics(
    experiment: &str,
    seed: u64,
    pred: &Grid<f32>,
    dense_gt: &Grid<f32>,
    support: &BinaryMask,
) -> Result<Vec<MetricsRecord>> {
    check_dims(pred, dense_gt, "scene_metrics")?;
    let error = Grid::from_fn(pred.height(), pred.width(), |r, c| pred.get(r, c) as f64 - dense_gt.get(r, c) as f64);
    CAPS_M
        .iter()
        .map(|&cap| {
            let within = dense_gt.map(|g| u8::from(g > 0.0 && g as f64 <= cap));
            let (mae, rmse) = mae_rmse(pred, dense_gt, cap)?.unwrap_or((f64::NAN, f64::NAN));
            let split = support_split_mae(pred, dense_gt, support, cap).ok();
            Ok(MetricsRecord {
                experiment: experiment.to_string(),
                seed: Some(seed),
                cap_m: cap,
                mae_mm: mae,
                rmse_mm: rmse,
                mae_on_mm: split.map_or(f64::NAN, |s| s.mae_on_mm),
                mae_off_mm: split.map_or(f64::NAN, |s| s.mae_off_mm.unwrap_or(0.0)),
                artifact_ratio: split.map_or(f64::NAN, |s| s.artifact_ratio()),
                stripe_score: stripe_score_masked(&error, support, Some(&within))?,
                n_pixels: within.count_ones(),
                n_on: split.map_or(0, |s| s.n_on),
                n_off: split.map_or(0, |s| s.n_off),
            })
        })
        .collect()
}

/// Per-cap mean of per-scene records, ignoring NaN entries.
pub fn aggregate(experiment: &str, records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    CAPS_M
        .iter()
        .map(|&cap| {
            let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.cap_m == cap && r.seed.is_some()).collect();
            let mean = |f: fn(&MetricsRecord) -> f64| {
                let vals: Vec<f64> = rows.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            };
            let (on, off) = (mean(|r| r.mae_on_mm), mean(|r| r.mae_off_mm));
            MetricsRecord {
                experiment: experiment.to_string(),
                seed: None,
                cap_m: cap,
                mae_mm: mean(|r| r.mae_mm),
                rmse_mm: mean(|r| r.rmse_mm),
                mae_on_mm: on,
                mae_off_mm: off,
                // From the aggregate MAEs, not a mean of per-scene ratios, which
                // a single scene with near-zero on-support error can dominate.
                artifact_ratio: (off + RATIO_EPS_MM) / (on + RATIO_EPS_MM),
                stripe_score: mean(|r| r.stripe_score),
                n_pixels: rows.iter().map(|r| r.n_pixels).sum(),
                n_on: rows.iter().map(|r| r.n_on).sum(),
                n_off: rows.iter().map(|r| r.n_off).sum(),
            }
        })
        .collect()
}

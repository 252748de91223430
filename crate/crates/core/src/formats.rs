//! On-disk formats: `DCR1` rasters, binary PGM/PPM depth images, metrics CSV
//! and exported bundle directories.
//!
//! A `DCR1` file is the magic `DCR1\n`, an ASCII header `<H> <W> <C>\n` and
//! `H·W·C` little-endian `f32` values stored channel by channel, each channel
//! row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MetricsRecord, CSV_HEADER};
use crate::geometry::{CameraIntrinsics, Point3};
use crate::raster::Grid;
use crate::simsensor::SampleBundle;

pub const RASTER_MAGIC: &[u8; 5] = b"DCR1\n";

fn format_err(kind: &'static str, detail: impl Into<String>) -> Error {
    Error::Format { kind, detail: detail.into() }
}

/// Encodes equally sized channels as one `DCR1` raster.
pub fn encode_dcr1(channels: &[&Grid<f32>]) -> Result<Vec<u8>> {
    let first = channels.first().ok_or_else(|| Error::usage("a DCR1 raster needs at least one channel"))?;
    let (h, w) = first.dims();
    if channels.iter().any(|c| c.dims() != (h, w)) {
        return Err(Error::usage("DCR1 channels must share extents"));
    }
    let mut out = Vec::with_capacity(32 + h * w * channels.len() * 4);
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(format!("{h} {w} {}\n", channels.len()).as_bytes());
    for c in channels {
        for v in c.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dcr1(bytes: &[u8]) -> Result<Vec<Grid<f32>>> {
    let rest = bytes
        .strip_prefix(RASTER_MAGIC.as_slice())
        .ok_or_else(|| format_err("DCR1", "missing DCR1 magic"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err("DCR1", "unterminated header"))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| format_err("DCR1", "header is not ASCII"))?;
    let dims: Vec<usize> = header
        .split(' ')
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err("DCR1", format!("bad header {header:?}")))?;
    let [h, w, c] = dims[..] else {
        return Err(format_err("DCR1", format!("header {header:?} must hold H W C")));
    };
    let payload = &rest[nl + 1..];
    if payload.len() != h * w * c * 4 {
        return Err(format_err(
            "DCR1",
            format!("payload holds {} bytes, header {h}x{w}x{c} needs {}", payload.len(), h * w * c * 4),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    values
        .chunks(h * w)
        .take(c)
        .map(|ch| Grid::from_vec(h, w, ch.to_vec()))
        .collect()
}

pub fn write_dcr1(path: &Path, channels: &[&Grid<f32>]) -> Result<()> {
    write_bytes(path, &encode_dcr1(channels)?)
}

pub fn read_dcr1(path: &Path) -> Result<Vec<Grid<f32>>> {
    decode_dcr1(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Grey level of a depth: `0` at zero metres, `255` at `max_range` and beyond.
pub fn depth_to_gray(depth: f32, max_range: f64) -> u8 {
    let t = (depth as f64 / max_range).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

/// Piecewise-linear map through blue at 0, green at 0.5 and red at 1.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let ch = |x: f64| (x * 255.0).round() as u8;
    if t <= 0.5 {
        let u = t / 0.5;
        [0, ch(u), ch(1.0 - u)]
    } else {
        let u = (t - 0.5) / 0.5;
        [ch(u), ch(1.0 - u), 0]
    }
}

/// Binary greyscale `P5` image of a depth raster.
pub fn encode_pgm(depth: &Grid<f32>, max_range: f64) -> Vec<u8> {
    let (h, w) = depth.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(depth.data().iter().map(|&d| depth_to_gray(d, max_range)));
    out
}

/// Binary colour `P6` image of a depth raster.
pub fn encode_ppm(depth: &Grid<f32>, max_range: f64) -> Vec<u8> {
    let (h, w) = depth.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(depth.data().iter().flat_map(|&d| colormap(d as f64 / max_range)));
    out
}

/// Parses a `P5` (one channel) or `P6` (three channels) image with maxval 255
/// as written by [`encode_pgm`] and [`encode_ppm`].
pub fn decode_pnm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("PNM", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format_err("PNM", format!("unsupported magic {other:?}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| format_err("PNM", format!("bad header field {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format_err("PNM", format!("maxval {maxval} is not 255")));
    }
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != w * h * channels {
        return Err(format_err("PNM", format!("payload holds {} bytes, expected {}", data.len(), w * h * channels)));
    }
    Ok((h, w, channels, data.to_vec()))
}

/// Metrics CSV text: header then one line per record.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

/// Everything of a bundle that is not a raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSidecar {
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub radar_points: Vec<Point3>,
    pub radar_truth: Vec<Point3>,
}

/// Raster files of an exported bundle, in the order they are written.
pub const BUNDLE_RASTERS: [&str; 6] = ["image", "lidar", "radar", "mask", "dense_gt", "target"];

/// Writes `image.dcr`, `lidar.dcr`, `radar.dcr`, `mask.dcr`, `dense_gt.dcr`,
/// `target.dcr` and `bundle.json` into `dir`.
pub fn export_bundle(dir: &Path, b: &SampleBundle) -> Result<()> {
    let mask = b.mask.map(f32::from);
    let grids = [&b.image, &b.lidar, &b.radar_raster, &mask, &b.dense_gt, &b.target];
    for (name, g) in BUNDLE_RASTERS.iter().zip(grids) {
        write_dcr1(&dir.join(format!("{name}.dcr")), &[g])?;
    }
    let sidecar = BundleSidecar {
        seed: b.seed,
        intrinsics: b.intrinsics,
        radar_points: b.radar_points.clone(),
        radar_truth: b.radar_truth.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar)? + "\n";
    write_text(&dir.join("bundle.json"), &json)
}

pub fn import_bundle(dir: &Path) -> Result<SampleBundle> {
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let side: BundleSidecar = serde_json::from_str(&text)?;
    let mut grids = Vec::new();
    for name in BUNDLE_RASTERS {
        let mut chans = read_dcr1(&dir.join(format!("{name}.dcr")))?;
        if chans.len() != 1 {
            return Err(format_err("DCR1", format!("{name}.dcr holds {} channels, expected 1", chans.len())));
        }
        grids.push(chans.remove(0));
    }
    let mut it = grids.into_iter();
    let mut next = || it.next().unwrap();
    Ok(SampleBundle {
        seed: side.seed,
        intrinsics: side.intrinsics,
        image: next(),
        lidar: next(),
        radar_raster: next(),
        mask: next().map(|v| u8::from(v != 0.0)),
        dense_gt: next(),
        target: next(),
        radar_points: side.radar_points,
        radar_truth: side.radar_truth,
    })
}

/// `out/<prefix><index>` for bundle directories.
pub fn bundle_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("bundle_{index:05}"))
}

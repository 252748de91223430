//! Row-major 2-D grids used for every image-plane quantity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Depth in metres with `0` meaning "no sample".
pub type SparseDepthImage = Grid<f32>;
/// Depth in metres at every pixel, in `(0, max_range]`.
pub type DenseDepthImage = Grid<f32>;
/// Camera intensity in `[0, 1]`.
pub type IntensityImage = Grid<f32>;
/// Values in `{0, 1}`.
pub type BinaryMask = Grid<u8>;

impl<T: Copy + Default> Grid<T> {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::default())
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::config(format!(
                "{height}x{width} grid needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy + Default>(&self, mut f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.get(r, self.width - 1 - c))
    }
}

impl Grid<f32> {
    /// Keeps `value` only if the pixel is empty or currently holds a larger depth.
    #[inline]
    pub fn zbuffer_write(&mut self, row: usize, col: usize, depth: f32) {
        let slot = &mut self.data[row * self.width + col];
        if *slot == 0.0 || depth < *slot {
            *slot = depth;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    /// Pixels holding a sample.
    pub fn support(&self) -> BinaryMask {
        self.map(|v| u8::from(v > 0.0))
    }
}

impl Grid<u8> {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Sets every pixel within Chebyshev distance `radius` of a set pixel.
    pub fn dilate(&self, radius: usize) -> Self {
        let (h, w) = self.dims();
        Self::from_fn(h, w, |r, c| {
            let rows = r.saturating_sub(radius)..=(r + radius).min(h - 1);
            let hit = rows.into_iter().any(|rr| {
                (c.saturating_sub(radius)..=(c + radius).min(w - 1)).any(|cc| self.get(rr, cc) != 0)
            });
            u8::from(hit)
        })
    }
}

/// Exact Euclidean feature transform of a mask: for every pixel, the squared
/// distance to the nearest set pixel and that pixel's flat index. Pixels of an
/// empty mask get `None`.
pub fn nearest_feature(mask: &BinaryMask) -> Grid<Option<(f64, usize)>> {
    let (h, w) = mask.dims();
    // Column pass: nearest set row in the same column.
    let mut col_near: Vec<Option<usize>> = vec![None; h * w];
    for c in 0..w {
        let mut last = None;
        for r in 0..h {
            if mask.get(r, c) != 0 {
                last = Some(r);
            }
            col_near[r * w + c] = last;
        }
        let mut next = None;
        for r in (0..h).rev() {
            if mask.get(r, c) != 0 {
                next = Some(r);
            }
            let best = match (col_near[r * w + c], next) {
                (Some(a), Some(b)) => Some(if r - a <= b - r { a } else { b }),
                (a, b) => a.or(b),
            };
            col_near[r * w + c] = best;
        }
    }

    // Row pass: lower envelope of parabolas (c - q)^2 + g(q)^2.
    let mut out = Grid::filled(h, w, None);
    let mut sites: Vec<usize> = Vec::with_capacity(w);
    let mut bounds: Vec<f64> = Vec::with_capacity(w + 1);
    for r in 0..h {
        let g = |q: usize| col_near[r * w + q].map(|rr| (rr as f64 - r as f64).powi(2));
        sites.clear();
        bounds.clear();
        for q in 0..w {
            let Some(fq) = g(q) else { continue };
            loop {
                let Some(&p) = sites.last() else {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let fp = g(p).unwrap();
                let s = ((fq + (q * q) as f64) - (fp + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= *bounds.last().unwrap() {
                    sites.pop();
                    bounds.pop();
                } else {
                    sites.push(q);
                    bounds.push(s);
                    break;
                }
            }
        }
        if sites.is_empty() {
            continue;
        }
        let mut k = 0;
        for c in 0..w {
            while k + 1 < sites.len() && bounds[k + 1] < c as f64 {
                k += 1;
            }
            let q = sites[k];
            let rr = col_near[r * w + q].unwrap();
            let d2 = (c as f64 - q as f64).powi(2) + (rr as f64 - r as f64).powi(2);
            out.set(r, c, Some((d2, rr * w + q)));
        }
    }
    out
}

/// Fills every empty pixel with the value of its nearest sample.
pub fn nearest_fill(sparse: &SparseDepthImage) -> SparseDepthImage {
    let near = nearest_feature(&sparse.support());
    Grid::from_fn(sparse.height(), sparse.width(), |r, c| match near.get(r, c) {
        Some((_, idx)) => sparse.data()[idx],
        None => 0.0,
    })
}

/// Euclidean distance from every pixel to the nearest set pixel of `mask`
/// (`None` for an empty mask).
pub fn distance_transform(mask: &BinaryMask) -> Option<Grid<f64>> {
    let near = nearest_feature(mask);
    if mask.count_ones() == 0 {
        return None;
    }
    Some(near.map(|v| v.map_or(0.0, |(d2, _)| d2.sqrt())))
}

//! Slice-level kernels behind the graph ops. Shapes are validated by the
//! caller; these functions only index.

use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `[C, H, W]` image into a `[C·kh·kw, out_h·out_w]` matrix.
pub(crate) fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let out_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *o = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds a column matrix back into an image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    input: &[T],
    kernel: &[T],
    batch: usize,
    out_channels: usize,
    g: &ConvGeom,
) -> Vec<T> {
    let in_plane = g.channels * g.height * g.width;
    let out_plane = out_channels * g.col_cols();
    let mut out = vec![T::zero(); batch * out_plane];
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let ncols = g.col_cols() as isize;
    let nrows = g.col_rows() as isize;
    for n in 0..batch {
        im2col(&input[n * in_plane..(n + 1) * in_plane], g, &mut cols);
        T::gemm(
            out_channels,
            g.col_rows(),
            g.col_cols(),
            kernel,
            (nrows, 1),
            &cols,
            (ncols, 1),
            T::zero(),
            &mut out[n * out_plane..(n + 1) * out_plane],
            (ncols, 1),
        );
    }
    out
}

/// Accumulates input and kernel gradients of a convolution. Either target
/// may be skipped when its tensor does not need a gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    batch: usize,
    out_channels: usize,
    g: &ConvGeom,
    mut grad_input: Option<&mut [T]>,
    mut grad_kernel: Option<&mut [T]>,
) {
    let in_plane = g.channels * g.height * g.width;
    let out_plane = out_channels * g.col_cols();
    let nrows = g.col_rows();
    let ncols = g.col_cols();
    let mut cols = vec![T::zero(); nrows * ncols];
    for n in 0..batch {
        let gout = &grad_out[n * out_plane..(n + 1) * out_plane];
        if let Some(gk) = grad_kernel.as_deref_mut() {
            im2col(&input[n * in_plane..(n + 1) * in_plane], g, &mut cols);
            // dK[K, R] += dOut[K, P] · colsᵀ[P, R]
            T::gemm(
                out_channels,
                ncols,
                nrows,
                gout,
                (ncols as isize, 1),
                &cols,
                (1, ncols as isize),
                T::one(),
                gk,
                (nrows as isize, 1),
            );
        }
        if let Some(gi) = grad_input.as_deref_mut() {
            // dcols[R, P] = Kᵀ[R, K] · dOut[K, P]
            T::gemm(
                nrows,
                out_channels,
                ncols,
                kernel,
                (1, nrows as isize),
                gout,
                (ncols as isize, 1),
                T::zero(),
                &mut cols,
                (ncols as isize, 1),
            );
            col2im(&cols, g, &mut gi[n * in_plane..(n + 1) * in_plane]);
        }
    }
}

/// 2×2 mean pooling over each `[H, W]` plane.
pub(crate) fn down2<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                let a = src[2 * i * w + 2 * j];
                let b = src[2 * i * w + 2 * j + 1];
                let c = src[(2 * i + 1) * w + 2 * j];
                let d = src[(2 * i + 1) * w + 2 * j + 1];
                dst[i * ow + j] = (a + b + c + d) * quarter;
            }
        }
    }
    out
}

pub(crate) fn down2_backward<T: Scalar>(gout: &[T], planes: usize, h: usize, w: usize, gin: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    for p in 0..planes {
        let src = &gout[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gin[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let g = src[i * ow + j] * quarter;
                dst[2 * i * w + 2 * j] += g;
                dst[2 * i * w + 2 * j + 1] += g;
                dst[(2 * i + 1) * w + 2 * j] += g;
                dst[(2 * i + 1) * w + 2 * j + 1] += g;
            }
        }
    }
}

/// Nearest-neighbour 2× upsampling of each `[H, W]` plane.
pub(crate) fn up2<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            let srow = &src[(i / 2) * w..(i / 2 + 1) * w];
            for (j, d) in dst[i * ow..(i + 1) * ow].iter_mut().enumerate() {
                *d = srow[j / 2];
            }
        }
    }
    out
}

pub(crate) fn up2_backward<T: Scalar>(gout: &[T], planes: usize, h: usize, w: usize, gin: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &gout[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gin[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                dst[(i / 2) * w + j / 2] += src[i * ow + j];
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn smooth_l1<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    if x.abs() < T::one() {
        half * x * x
    } else {
        x.abs() - half
    }
}

#[inline]
pub(crate) fn smooth_l1_grad<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else if x > T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

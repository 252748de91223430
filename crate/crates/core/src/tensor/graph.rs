use super::kernels::{self, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    ChannelBias {
        input: Var,
        bias: Var,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Down2(Var),
    Up2(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    MeanRows(Var),
    BroadcastSpatial(Var),
    Sum(Var),
    SmoothL1 {
        pred: Var,
        target: Vec<T>,
        count: usize,
    },
    BceLogits {
        logits: Var,
        target: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ChannelBias { .. } => "channel_bias",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Concat { .. } => "concat",
            Op::Down2(_) => "down2",
            Op::Up2(_) => "up2",
            Op::Linear { .. } => "linear",
            Op::MeanRows(_) => "mean_rows",
            Op::BroadcastSpatial(_) => "broadcast_spatial",
            Op::Sum(_) => "sum",
            Op::SmoothL1 { .. } => "smooth_l1",
            Op::BceLogits { .. } => "bce_with_logits",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of executed ops. Nodes are stored in execution order,
/// which is a topological order, so backward is a single reverse sweep.
#[derive(Debug)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf tensor; gradients are accumulated for it when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if one reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    // ---------------------------------------------------------------- ops

    /// 2-D cross-correlation of `[N, C, H, W]` input with a `[K, C, kh, kw]` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4("conv2d input")?;
        let [k, kc, kh, kw] = self.value(kernel).dims4("conv2d kernel")?;
        if kc != c {
            return Err(Error::config(format!(
                "conv2d: kernel expects {kc} input channels, input has {c}"
            )));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::config(format!("conv2d: kernel {kh}x{kw} must be odd")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::config(format!("conv2d: stride {stride} not in {{1, 2}}")));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::config(format!(
                "conv2d: {h}x{w} input too small for {kh}x{kw} kernel with padding {padding}"
            )));
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            n,
            k,
            &geom,
        );
        let value = Tensor::new(vec![n, k, geom.out_h, geom.out_w], out)?;
        self.push(value, Op::Conv2d { input, kernel, geom }, &[input, kernel])
    }

    /// Adds `bias[c]` to every element of channel `c` (axis 1) of a rank-2 or rank-4 tensor.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let b = self.value(bias);
        if x.rank() != 2 && x.rank() != 4 {
            return Err(Error::config(format!(
                "channel_bias expects rank 2 or 4, got {:?}",
                x.shape()
            )));
        }
        let c = x.shape()[1];
        if b.shape() != [c] {
            return Err(Error::config(format!(
                "channel_bias: bias {:?} does not match {c} channels",
                b.shape()
            )));
        }
        let inner: usize = x.shape()[2..].iter().product();
        let bd = b.data();
        let mut out = x.data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v += bd[(i / inner) % c];
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push(value, Op::ChannelBias { input, bias }, &[input, bias])
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&v| f(v)).collect())?;
        self.push(value, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let s = T::from_f64(slope);
        self.map(x, move |v| if v > T::zero() { v } else { v * s }, Op::LeakyRelu(x, s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let k = T::from_f64(k);
        self.map(x, move |v| v * k, Op::Scale(x, k))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::config("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::config(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::config(format!(
                    "concat: {s:?} incompatible with {base:?} along axis {axis}"
                )));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    /// Channel concatenation of `[N, C_i, H, W]` maps.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        for p in parts {
            self.value(*p).dims4("concat_channels")?;
        }
        self.concat(parts, 1)
    }

    /// 2×2 mean pooling.
    pub fn down2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("down2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::config(format!("down2: odd extent {h}x{w}")));
        }
        let out = kernels::down2(self.value(x).data(), n * c, h, w);
        let value = Tensor::new(vec![n, c, h / 2, w / 2], out)?;
        self.push(value, Op::Down2(x), &[x])
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn up2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("up2")?;
        let out = kernels::up2(self.value(x).data(), n * c, h, w);
        let value = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        self.push(value, Op::Up2(x), &[x])
    }

    /// `input · weightᵀ + bias` for `[N, Din]` input and `[Dout, Din]` weight.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let [n, din] = self.value(input).dims2("linear input")?;
        let [dout, wdin] = self.value(weight).dims2("linear weight")?;
        if wdin != din || self.shape(bias) != [dout] {
            return Err(Error::config(format!(
                "linear: input {:?}, weight {:?}, bias {:?} disagree",
                self.shape(input),
                self.shape(weight),
                self.shape(bias)
            )));
        }
        let mut out = vec![T::zero(); n * dout];
        let bd = self.value(bias).data();
        for row in out.chunks_mut(dout.max(1)) {
            row.copy_from_slice(bd);
        }
        if n > 0 && din > 0 && dout > 0 {
            T::gemm(
                n,
                din,
                dout,
                self.value(input).data(),
                (din as isize, 1),
                self.value(weight).data(),
                (1, din as isize),
                T::one(),
                &mut out,
                (dout as isize, 1),
            );
        }
        let value = Tensor::new(vec![n, dout], out)?;
        self.push(value, Op::Linear { input, weight, bias }, &[input, weight, bias])
    }

    /// Mean over the rows of a `[P, D]` tensor, giving `[1, D]`. Requires `P ≥ 1`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let [p, d] = self.value(x).dims2("mean_rows")?;
        if p == 0 {
            return Err(Error::config("mean_rows of an empty tensor"));
        }
        let inv = T::one() / T::from_f64(p as f64);
        let src = self.value(x).data();
        let out = (0..d)
            .map(|j| (0..p).map(|i| src[i * d + j]).sum::<T>() * inv)
            .collect();
        let value = Tensor::new(vec![1, d], out)?;
        self.push(value, Op::MeanRows(x), &[x])
    }

    /// Repeats each entry of an `[N, D]` tensor over an `h × w` plane, giving `[N, D, h, w]`.
    pub fn broadcast_spatial(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let [n, d] = self.value(x).dims2("broadcast_spatial")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * d * h * w);
        for &v in src {
            out.extend(std::iter::repeat_n(v, h * w));
        }
        let value = Tensor::new(vec![n, d, h, w], out)?;
        self.push(value, Op::BroadcastSpatial(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Mean smooth-L1 of `pred − target` over entries where `target ≠ 0`.
    /// With no valid entries the result is 0 and so is its gradient.
    pub fn masked_smooth_l1(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(Error::config(format!(
                "smooth_l1: prediction {:?} vs target {:?}",
                self.shape(pred),
                target.shape()
            )));
        }
        let p = self.value(pred).data();
        let mut total = T::zero();
        let mut count = 0usize;
        for (&x, &t) in p.iter().zip(target.data()) {
            if t != T::zero() {
                total += kernels::smooth_l1(x - t);
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_f64(count as f64)
        };
        self.push(
            Tensor::scalar(loss),
            Op::SmoothL1 {
                pred,
                target: target.data().to_vec(),
                count,
            },
            &[pred],
        )
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and a target in `[0, 1]`.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        if self.shape(logits) != target.shape() {
            return Err(Error::config(format!(
                "bce: logits {:?} vs target {:?}",
                self.shape(logits),
                target.shape()
            )));
        }
        let z = self.value(logits).data();
        let n = z.len().max(1);
        let total: T = z
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| kernels::softplus(x) - x * t)
            .sum();
        let loss = total / T::from_f64(n as f64);
        self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                logits,
                target: target.data().to_vec(),
            },
            &[logits],
        )
    }

    // ----------------------------------------------------------- backward

    /// Populates gradients of the scalar `loss` for every tensor that requires one.
    /// Gradients from an earlier call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, gout: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let out_value = &nodes[i].value;

        macro_rules! buf {
            ($v:expr) => {
                grad_buf(nodes, grads, $v)
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, geom } => {
                let x = nodes[input.0].value.data();
                let k = nodes[kernel.0].value.data();
                let batch = nodes[input.0].value.shape()[0];
                let out_channels = nodes[kernel.0].value.shape()[0];
                // Two passes so the two mutable buffers are never borrowed together.
                if let Some(gk) = buf!(*kernel) {
                    kernels::conv2d_backward(x, k, gout, batch, out_channels, geom, None, Some(gk));
                }
                if let Some(gi) = buf!(*input) {
                    kernels::conv2d_backward(x, k, gout, batch, out_channels, geom, Some(gi), None);
                }
            }
            Op::ChannelBias { input, bias } => {
                let shape = nodes[input.0].value.shape();
                let c = shape[1];
                let inner: usize = shape[2..].iter().product();
                if let Some(g) = buf!(*input) {
                    add_into(g, gout);
                }
                if let Some(g) = buf!(*bias) {
                    for (j, &v) in gout.iter().enumerate() {
                        g[(j / inner) % c] += v;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(g) = buf!(*x) {
                    for ((gi, &go), &v) in g.iter_mut().zip(gout).zip(xv) {
                        if v > T::zero() {
                            *gi += go;
                        }
                    }
                }
            }
            Op::LeakyRelu(x, slope) => {
                let xv = nodes[x.0].value.data();
                if let Some(g) = buf!(*x) {
                    for ((gi, &go), &v) in g.iter_mut().zip(gout).zip(xv) {
                        *gi += if v > T::zero() { go } else { go * *slope };
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = out_value.data();
                if let Some(g) = buf!(*x) {
                    for ((gi, &go), &s) in g.iter_mut().zip(gout).zip(y) {
                        *gi += go * s * (T::one() - s);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(g) = buf!(*a) {
                    add_into(g, gout);
                }
                if let Some(g) = buf!(*b) {
                    add_into(g, gout);
                }
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if let Some(g) = buf!(*a) {
                    for ((gi, &go), &v) in g.iter_mut().zip(gout).zip(bv) {
                        *gi += go * v;
                    }
                }
                if let Some(g) = buf!(*b) {
                    for ((gi, &go), &v) in g.iter_mut().zip(gout).zip(av) {
                        *gi += go * v;
                    }
                }
            }
            Op::Scale(x, k) => {
                if let Some(g) = buf!(*x) {
                    for (gi, &go) in g.iter_mut().zip(gout) {
                        *gi += go * *k;
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let shape = out_value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let chunk = nodes[p.0].value.shape()[*axis] * inner;
                    if let Some(g) = buf!(*p) {
                        for o in 0..outer {
                            let src = &gout[o * total + offset..o * total + offset + chunk];
                            add_into(&mut g[o * chunk..(o + 1) * chunk], src);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Down2(x) => {
                let [n, c, h, w] = dims4(nodes[x.0].value.shape());
                if let Some(g) = buf!(*x) {
                    kernels::down2_backward(gout, n * c, h, w, g);
                }
            }
            Op::Up2(x) => {
                let [n, c, h, w] = dims4(nodes[x.0].value.shape());
                if let Some(g) = buf!(*x) {
                    kernels::up2_backward(gout, n * c, h, w, g);
                }
            }
            Op::Linear { input, weight, bias } => {
                let [n, din] = dims2(nodes[input.0].value.shape());
                let dout = nodes[weight.0].value.shape()[0];
                let xv = nodes[input.0].value.data();
                let wv = nodes[weight.0].value.data();
                if n > 0 && din > 0 && dout > 0 {
                    if let Some(g) = buf!(*input) {
                        // dX[N, Din] += dY[N, Dout] · W[Dout, Din]
                        T::gemm(n, dout, din, gout, (dout as isize, 1), wv, (din as isize, 1), T::one(), g, (din as isize, 1));
                    }
                    if let Some(g) = buf!(*weight) {
                        // dW[Dout, Din] += dYᵀ[Dout, N] · X[N, Din]
                        T::gemm(dout, n, din, gout, (1, dout as isize), xv, (din as isize, 1), T::one(), g, (din as isize, 1));
                    }
                }
                if let Some(g) = buf!(*bias) {
                    for row in gout.chunks(dout.max(1)) {
                        add_into(g, row);
                    }
                }
            }
            Op::MeanRows(x) => {
                let [p, d] = dims2(nodes[x.0].value.shape());
                let inv = T::one() / T::from_f64(p as f64);
                if let Some(g) = buf!(*x) {
                    for r in 0..p {
                        for j in 0..d {
                            g[r * d + j] += gout[j] * inv;
                        }
                    }
                }
            }
            Op::BroadcastSpatial(x) => {
                let plane: usize = out_value.shape()[2..].iter().product();
                if let Some(g) = buf!(*x) {
                    for (gi, chunk) in g.iter_mut().zip(gout.chunks(plane.max(1))) {
                        *gi += chunk.iter().copied().sum::<T>();
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(g) = buf!(*x) {
                    for gi in g.iter_mut() {
                        *gi += gout[0];
                    }
                }
            }
            Op::SmoothL1 { pred, target, count } => {
                if *count == 0 {
                    return;
                }
                let pv = nodes[pred.0].value.data();
                let scale = gout[0] / T::from_f64(*count as f64);
                if let Some(g) = buf!(*pred) {
                    for ((gi, &x), &t) in g.iter_mut().zip(pv).zip(target) {
                        if t != T::zero() {
                            *gi += kernels::smooth_l1_grad(x - t) * scale;
                        }
                    }
                }
            }
            Op::BceLogits { logits, target } => {
                let z = nodes[logits.0].value.data();
                let scale = gout[0] / T::from_f64(z.len().max(1) as f64);
                if let Some(g) = buf!(*logits) {
                    for ((gi, &x), &t) in g.iter_mut().zip(z).zip(target) {
                        *gi += (kernels::sigmoid(x) - t) * scale;
                    }
                }
            }
        }
    }
}

/// Gradient buffer for `v`, allocated on first use; `None` when `v` needs no gradient.
fn grad_buf<'a, T: Scalar>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dims4(s: &[usize]) -> [usize; 4] {
    [s[0], s[1], s[2], s[3]]
}

fn dims2(s: &[usize]) -> [usize; 2] {
    [s[0], s[1]]
}

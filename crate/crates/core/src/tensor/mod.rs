//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op in execution order; [`Graph::backward`]
//! sweeps that record in reverse and accumulates gradients with `+=`
//! semantics, so a tensor consumed by several ops receives the sum of all
//! contributions. Graphs are generic over [`Scalar`]: `f32` for training,
//! `f64` for finite-difference verification.

mod checkpoint;
mod graph;
mod kernels;
mod scalar;
mod value;

pub use checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
pub use graph::{Graph, Var};
pub use scalar::{Precision, Scalar};
pub use value::Tensor;

/// Logistic function with the same split form the graph op uses.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    kernels::sigmoid(x)
}

/// Smooth-L1 (Huber with unit threshold): `0.5x²` inside `|x| < 1`, `|x| − 0.5` outside.
pub fn smooth_l1<T: Scalar>(x: T) -> T {
    kernels::smooth_l1(x)
}

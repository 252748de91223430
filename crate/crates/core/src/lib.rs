//! A desk-scale laboratory for sparse-supervised radar-camera depth completion.
//!
//! Synthetic scenes are ray-cast into a camera image, a scanline LiDAR, a
//! sparse radar and a dense ground-truth depth map. Depth networks trained
//! on the sparse LiDAR alone can collapse onto the fixed scanline layout;
//! the [`disruption`] augmentations break those position correspondences and
//! the compensation heads in [`model`] restore part of what they remove.
//! Because the simulator also renders dense ground truth, [`eval`] can
//! measure error away from the scanlines directly.

pub mod config;
pub mod disruption;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod formats;
pub mod geometry;
pub mod model;
pub mod raster;
pub mod simsensor;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

//! Monocular depth estimation with pyramid feature attention, built on a
//! self-contained reverse-mode autodiff core.
//!
//! The crate is layered: [`tensor`] provides dense values and the autodiff
//! tape, [`nn`] the convolution/pooling/resampling layers, [`model`] the
//! depth network with its channel and spatial attention blocks, and
//! [`objectives`] the training losses and depth metrics. [`data`], [`optim`],
//! [`train`], and [`eval`] wire those into a reproducible training loop.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tensor::{Tape, Tensor};

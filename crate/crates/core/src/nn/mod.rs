//! Neural network layers: convolution, global pooling, spatial resampling,
//! and the upsample-then-convolve block used by both decoder paths.

mod conv;
mod pool;
mod resample;

pub use conv::{same_padding, Conv2dLayer};
pub use resample::{ResampleFactor, ResampleMode, ResampleSpec};

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

/// Bilinear ×2 upsample followed by a same-padding 3×3 conv and ReLU.
#[derive(Clone)]
pub struct UpconvLayer<T: Scalar> {
    pub conv: Conv2dLayer<T>,
}

impl<T: Scalar> UpconvLayer<T> {
    pub fn new(in_c: usize, out_c: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(UpconvLayer {
            conv: Conv2dLayer::new(in_c, out_c, 3, 1, 1, rng)?,
        })
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let up = tape.bilinear_up(x, 2)?;
        let y = self.conv.forward(tape, &up)?;
        Ok(tape.relu(&y))
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }
}

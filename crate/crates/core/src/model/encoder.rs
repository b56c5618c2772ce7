//! Five-block convolutional encoder producing features at H/2 .. H/32.
//!
//! Each block opens with a stride-2 3×3 conv and continues with stride-1
//! 3×3 convs, all ReLU-activated. This is a compact stand-in for a
//! pretrained backbone; only the resolution/channel contract matters to
//! the rest of the network.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Conv2dLayer;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Output channels of blocks 1..5.
    pub block_channels: [usize; 5],
    /// Convs per block including the stride-2 entry conv.
    pub convs_per_block: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            block_channels: [16, 32, 64, 128, 256],
            convs_per_block: 2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("encoder block channels must be >= 1".into()));
        }
        if self.convs_per_block == 0 {
            return Err(Error::Config("encoder needs at least one conv per block".into()));
        }
        Ok(())
    }
}

pub struct Encoder<T: Scalar> {
    /// blocks[i][j]: conv j of block i+1; j = 0 has stride 2.
    pub(crate) blocks: Vec<Vec<Conv2dLayer<T>>>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(cfg: &EncoderConfig, in_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut blocks = Vec::with_capacity(5);
        let mut in_c = in_channels;
        for &out_c in &cfg.block_channels {
            let mut convs = Vec::with_capacity(cfg.convs_per_block);
            convs.push(Conv2dLayer::new(in_c, out_c, 3, 2, 1, rng)?);
            for _ in 1..cfg.convs_per_block {
                convs.push(Conv2dLayer::new(out_c, out_c, 3, 1, 1, rng)?);
            }
            blocks.push(convs);
            in_c = out_c;
        }
        Ok(Encoder { blocks })
    }

    /// Runs all five blocks, returning [E1..E5]. The input resolution must
    /// be divisible by 32 so every block halves cleanly; checked before
    /// any compute.
    pub fn forward(&self, tape: &Tape<T>, rgb: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if rgb.rank() != 4 {
            return Err(Error::invalid(format!(
                "encoder expects N×C×H×W, got {:?}",
                rgb.shape()
            )));
        }
        let (h, w) = (rgb.shape()[2], rgb.shape()[3]);
        if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "encoder input resolution {h}x{w} must be divisible by 32"
            )));
        }
        let mut features = Vec::with_capacity(5);
        let mut x = rgb.clone();
        for convs in &self.blocks {
            for conv in convs {
                x = tape.relu(&conv.forward(tape, &x)?);
            }
            features.push(x.clone());
        }
        Ok(features)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (i, convs) in self.blocks.iter().enumerate() {
            for (j, conv) in convs.iter().enumerate() {
                f(&format!("encoder.b{}.c{}.weight", i + 1, j), &conv.weight);
                f(&format!("encoder.b{}.c{}.bias", i + 1, j), &conv.bias);
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, convs) in self.blocks.iter_mut().enumerate() {
            for (j, conv) in convs.iter_mut().enumerate() {
                f(&format!("encoder.b{}.c{}.weight", i + 1, j), &mut conv.weight);
                f(&format!("encoder.b{}.c{}.bias", i + 1, j), &mut conv.bias);
            }
        }
    }
}

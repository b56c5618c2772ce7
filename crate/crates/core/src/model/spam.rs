//! Spatial attention over a three-level resolution pyramid.
//!
//! The input is taken at full, half, and quarter resolution (nearest
//! neighbor both directions). Each level runs 3×3 convs C → C/r → C with a
//! ReLU between and a sigmoid after, is upsampled back, and the summed
//! scores pass through one more sigmoid to gate the input elementwise.
//! With all parameters zero every level scores 0.5, so the gate is
//! σ(1.5) ≈ 0.8176 everywhere.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Conv2dLayer;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpamConfig {
    pub channels: usize,
    pub reduction: usize,
}

impl SpamConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, r) = (self.channels, self.reduction);
        if c == 0 || r == 0 {
            return Err(Error::Config("spatial attention needs channels, reduction >= 1".into()));
        }
        if c % r != 0 {
            return Err(Error::Config(format!(
                "spatial attention reduction {r} must divide {c}"
            )));
        }
        Ok(())
    }
}

struct SpamBranch<T: Scalar> {
    conv1: Conv2dLayer<T>,
    conv2: Conv2dLayer<T>,
}

pub struct Spam<T: Scalar> {
    branches: Vec<SpamBranch<T>>,
    channels: usize,
}

/// Downsample factors of the three pyramid levels.
const LEVEL_FACTORS: [usize; 3] = [1, 2, 4];

impl<T: Scalar> Spam<T> {
    pub fn new(cfg: &SpamConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (c, r) = (cfg.channels, cfg.reduction);
        let mut branches = Vec::with_capacity(LEVEL_FACTORS.len());
        for _ in LEVEL_FACTORS {
            branches.push(SpamBranch {
                conv1: Conv2dLayer::new(c, c / r, 3, 1, 1, rng)?,
                conv2: Conv2dLayer::new(c / r, c, 3, 1, 1, rng)?,
            });
        }
        Ok(Spam {
            branches,
            channels: c,
        })
    }

    /// Zeroes every branch conv, forcing the analytically known gate.
    pub fn zero_params(&mut self) {
        for b in &mut self.branches {
            let (i1, o1) = (b.conv1.in_channels(), b.conv1.out_channels());
            let (i2, o2) = (b.conv2.in_channels(), b.conv2.out_channels());
            b.conv1 = Conv2dLayer::zeroed(i1, o1, 3, 1, 1).expect("valid zero conv");
            b.conv2 = Conv2dLayer::zeroed(i2, o2, 3, 1, 1).expect("valid zero conv");
        }
    }

    pub fn forward(&self, tape: &Tape<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        let gate = self.gate(tape, y)?;
        tape.mul(&gate, y)
    }

    /// The fused attention map σ(s₁+s₂+s₃), exposed for range checks.
    pub fn gate(&self, tape: &Tape<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        if y.rank() != 4 || y.shape()[1] != self.channels {
            return Err(Error::invalid(format!(
                "spatial attention expects N×{}×H×W, got {:?}",
                self.channels,
                y.shape()
            )));
        }
        let (h, w) = (y.shape()[2], y.shape()[3]);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::invalid(format!(
                "spatial attention needs H, W divisible by 4, got {h}x{w}"
            )));
        }
        let mut fused: Option<Tensor<T>> = None;
        for (branch, &factor) in self.branches.iter().zip(&LEVEL_FACTORS) {
            let level = if factor == 1 {
                y.clone()
            } else {
                tape.nearest_down(y, factor)?
            };
            let hidden = tape.relu(&branch.conv1.forward(tape, &level)?);
            let score = tape.sigmoid(&branch.conv2.forward(tape, &hidden)?);
            let restored = if factor == 1 {
                score
            } else {
                tape.nearest_up(&score, factor)?
            };
            fused = Some(match fused {
                None => restored,
                Some(acc) => tape.add(&acc, &restored)?,
            });
        }
        Ok(tape.sigmoid(&fused.expect("three levels")))
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (i, b) in self.branches.iter().enumerate() {
            f(&format!("spam.b{}.conv1.weight", i + 1), &b.conv1.weight);
            f(&format!("spam.b{}.conv1.bias", i + 1), &b.conv1.bias);
            f(&format!("spam.b{}.conv2.weight", i + 1), &b.conv2.weight);
            f(&format!("spam.b{}.conv2.bias", i + 1), &b.conv2.bias);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, b) in self.branches.iter_mut().enumerate() {
            f(&format!("spam.b{}.conv1.weight", i + 1), &mut b.conv1.weight);
            f(&format!("spam.b{}.conv1.bias", i + 1), &mut b.conv1.bias);
            f(&format!("spam.b{}.conv2.weight", i + 1), &mut b.conv2.weight);
            f(&format!("spam.b{}.conv2.bias", i + 1), &mut b.conv2.bias);
        }
    }
}

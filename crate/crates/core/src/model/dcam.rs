//! Dual-scale channel attention with recalibration.
//!
//! A global branch pools the map two ways (average and max), concatenates
//! to 2C channels, and squeezes through 1×1 convs (2C → 2C/r → C). A local
//! branch applies 1×1 convs (C → C/r → C) at full resolution. Their product
//! is the channel attention map; the recalibration block multiplies it into
//! a 1×1-conv transform of the input and adds the input back, so zeroing
//! the closing conv makes the whole block an exact identity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Conv2dLayer;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcamConfig {
    pub channels: usize,
    pub reduction: usize,
}

impl DcamConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, r) = (self.channels, self.reduction);
        if c == 0 || r == 0 {
            return Err(Error::Config("channel attention needs channels, reduction >= 1".into()));
        }
        if (2 * c) % r != 0 || c % r != 0 {
            return Err(Error::Config(format!(
                "channel attention reduction {r} must divide both {c} and {}",
                2 * c
            )));
        }
        Ok(())
    }
}

pub struct Dcam<T: Scalar> {
    pub(crate) global_conv1: Conv2dLayer<T>,
    pub(crate) global_conv2: Conv2dLayer<T>,
    local_conv1: Conv2dLayer<T>,
    local_conv2: Conv2dLayer<T>,
    f_conv: Conv2dLayer<T>,
    pub(crate) h_conv: Conv2dLayer<T>,
    channels: usize,
}

impl<T: Scalar> Dcam<T> {
    pub fn new(cfg: &DcamConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (c, r) = (cfg.channels, cfg.reduction);
        Ok(Dcam {
            global_conv1: Conv2dLayer::new(2 * c, 2 * c / r, 1, 1, 1, rng)?,
            global_conv2: Conv2dLayer::new(2 * c / r, c, 1, 1, 1, rng)?,
            local_conv1: Conv2dLayer::new(c, c / r, 1, 1, 1, rng)?,
            local_conv2: Conv2dLayer::new(c / r, c, 1, 1, 1, rng)?,
            f_conv: Conv2dLayer::new(c, c, 1, 1, 1, rng)?,
            h_conv: Conv2dLayer::new(c, c, 1, 1, 1, rng)?,
            channels: c,
        })
    }

    pub fn global_hidden_width(&self) -> usize {
        self.global_conv1.out_channels()
    }

    /// Zeroes the closing recalibration conv, making forward the identity.
    pub fn zero_h(&mut self) {
        let oc = self.h_conv.out_channels();
        let ic = self.h_conv.in_channels();
        self.h_conv = Conv2dLayer::zeroed(ic, oc, 1, 1, 1).expect("valid zero conv");
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 || x.shape()[1] != self.channels {
            return Err(Error::invalid(format!(
                "channel attention expects N×{}×H×W, got {:?}",
                self.channels,
                x.shape()
            )));
        }
        // global vector: concat(GAP, GMP) -> 2C/r -> C, ReLU after each conv
        let gap = tape.global_avg_pool(x)?;
        let gmp = tape.global_max_pool(x)?;
        let pooled = tape.concat(&[&gap, &gmp], 1)?;
        let g = tape.relu(&self.global_conv1.forward(tape, &pooled)?);
        let g = tape.relu(&self.global_conv2.forward(tape, &g)?);

        // local map at full resolution
        let l = tape.relu(&self.local_conv1.forward(tape, x)?);
        let l = tape.relu(&self.local_conv2.forward(tape, &l)?);

        // attention = local ⊗ global (global broadcast over H×W)
        let attention = tape.mul(&l, &g)?;

        let fx = tape.relu(&self.f_conv.forward(tape, x)?);
        let gated = tape.mul(&fx, &attention)?;
        let h = tape.relu(&self.h_conv.forward(tape, &gated)?);
        tape.add(&h, x)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        let pairs: [(&str, &Conv2dLayer<T>); 6] = [
            ("dcam.global.conv1", &self.global_conv1),
            ("dcam.global.conv2", &self.global_conv2),
            ("dcam.local.conv1", &self.local_conv1),
            ("dcam.local.conv2", &self.local_conv2),
            ("dcam.recal.f", &self.f_conv),
            ("dcam.recal.h", &self.h_conv),
        ];
        for (name, conv) in pairs {
            f(&format!("{name}.weight"), &conv.weight);
            f(&format!("{name}.bias"), &conv.bias);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        let pairs: [(&str, &mut Conv2dLayer<T>); 6] = [
            ("dcam.global.conv1", &mut self.global_conv1),
            ("dcam.global.conv2", &mut self.global_conv2),
            ("dcam.local.conv1", &mut self.local_conv1),
            ("dcam.local.conv2", &mut self.local_conv2),
            ("dcam.recal.f", &mut self.f_conv),
            ("dcam.recal.h", &mut self.h_conv),
        ];
        for (name, conv) in pairs {
            f(&format!("{name}.weight"), &mut conv.weight);
            f(&format!("{name}.bias"), &mut conv.bias);
        }
    }
}

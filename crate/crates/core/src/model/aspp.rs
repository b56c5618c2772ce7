//! Densely connected atrous spatial pyramid pooling.
//!
//! Five dilated 3×3 layers at rates 3, 6, 12, 18, 24. Layer k sees the
//! module input concatenated with all previous layer outputs, squeezes it
//! through a 1×1 bottleneck, and emits `growth` channels; the module output
//! reprojects the full concatenation back to the input width.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Conv2dLayer;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

pub const ASPP_RATES: [usize; 5] = [3, 6, 12, 18, 24];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseAsppConfig {
    pub in_channels: usize,
    /// Channels added by each dilated layer.
    pub growth: usize,
    /// 1×1 bottleneck width ahead of each dilated conv.
    pub bottleneck: usize,
}

impl DenseAsppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.growth == 0 || self.bottleneck == 0 {
            return Err(Error::Config(
                "dense ASPP channels, growth, and bottleneck must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

struct AsppLayer<T: Scalar> {
    reduce: Conv2dLayer<T>,
    dilated: Conv2dLayer<T>,
}

pub struct DenseAspp<T: Scalar> {
    layers: Vec<AsppLayer<T>>,
    project: Conv2dLayer<T>,
    in_channels: usize,
}

impl<T: Scalar> DenseAspp<T> {
    pub fn new(cfg: &DenseAsppConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(ASPP_RATES.len());
        for (k, &rate) in ASPP_RATES.iter().enumerate() {
            let layer_in = cfg.in_channels + k * cfg.growth;
            layers.push(AsppLayer {
                reduce: Conv2dLayer::new(layer_in, cfg.bottleneck, 1, 1, 1, rng)?,
                dilated: Conv2dLayer::new(cfg.bottleneck, cfg.growth, 3, 1, rate, rng)?,
            });
        }
        let final_in = cfg.in_channels + ASPP_RATES.len() * cfg.growth;
        Ok(DenseAspp {
            layers,
            project: Conv2dLayer::new(final_in, cfg.in_channels, 1, 1, 1, rng)?,
            in_channels: cfg.in_channels,
        })
    }

    pub fn forward(&self, tape: &Tape<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
        if f.rank() != 4 || f.shape()[1] != self.in_channels {
            return Err(Error::invalid(format!(
                "dense ASPP expects N×{}×H×W, got {:?}",
                self.in_channels,
                f.shape()
            )));
        }
        if f.shape()[2] < 2 || f.shape()[3] < 2 {
            return Err(Error::invalid(format!(
                "dense ASPP needs at least 2x2 spatial extent, got {}x{}",
                f.shape()[2],
                f.shape()[3]
            )));
        }
        let mut feats: Vec<Tensor<T>> = vec![f.clone()];
        for layer in &self.layers {
            let refs: Vec<&Tensor<T>> = feats.iter().collect();
            let stacked = if refs.len() == 1 {
                feats[0].clone()
            } else {
                tape.concat(&refs, 1)?
            };
            let squeezed = tape.relu(&layer.reduce.forward(tape, &stacked)?);
            let out = tape.relu(&layer.dilated.forward(tape, &squeezed)?);
            feats.push(out);
        }
        let refs: Vec<&Tensor<T>> = feats.iter().collect();
        let stacked = tape.concat(&refs, 1)?;
        Ok(tape.relu(&self.project.forward(tape, &stacked)?))
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (k, layer) in self.layers.iter().enumerate() {
            f(&format!("aspp.l{}.reduce.weight", k + 1), &layer.reduce.weight);
            f(&format!("aspp.l{}.reduce.bias", k + 1), &layer.reduce.bias);
            f(&format!("aspp.l{}.dilated.weight", k + 1), &layer.dilated.weight);
            f(&format!("aspp.l{}.dilated.bias", k + 1), &layer.dilated.bias);
        }
        f("aspp.project.weight", &self.project.weight);
        f("aspp.project.bias", &self.project.bias);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            f(&format!("aspp.l{}.reduce.weight", k + 1), &mut layer.reduce.weight);
            f(&format!("aspp.l{}.reduce.bias", k + 1), &mut layer.reduce.bias);
            f(&format!("aspp.l{}.dilated.weight", k + 1), &mut layer.dilated.weight);
            f(&format!("aspp.l{}.dilated.bias", k + 1), &mut layer.dilated.bias);
        }
        f("aspp.project.weight", &mut self.project.weight);
        f("aspp.project.bias", &mut self.project.bias);
    }
}

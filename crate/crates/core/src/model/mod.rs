//! The full depth estimation network.
//!
//! Two decoder paths run from a shared five-block encoder. The high-level
//! path fuses E3..E5 at H/8, expands receptive fields with dense ASPP,
//! applies channel attention, and upsamples three times. The low-level path
//! joins E1 and E2 at H/4, applies spatial pyramid attention, and upsamples
//! twice. A small head turns the concatenated paths into a depth map in
//! (0, max_depth) via a sigmoid.

mod aspp;
mod dcam;
mod encoder;
mod spam;

pub use aspp::{DenseAspp, DenseAsppConfig, ASPP_RATES};
pub use dcam::{Dcam, DcamConfig};
pub use encoder::{Encoder, EncoderConfig};
pub use spam::{Spam, SpamConfig};

use crate::error::{Error, Result};
use crate::nn::{Conv2dLayer, UpconvLayer};
use crate::params::ParamSet;
use crate::rng::{derive_rng, tag};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PfanetConfig {
    pub encoder: EncoderConfig,
    /// Width of the fused high-level path (and of ASPP/channel attention).
    pub c_high: usize,
    /// Width of the low-level path entering spatial attention.
    pub c_low: usize,
    /// Attention reduction ratio r, shared by both attention blocks.
    pub reduction: usize,
    pub aspp_growth: usize,
    pub aspp_bottleneck: usize,
    pub head_channels: usize,
    /// Depth range upper bound in meters; outputs lie in (0, max_depth).
    pub max_depth: f64,
    /// Parameter-init seed.
    pub seed: u64,
}

impl Default for PfanetConfig {
    fn default() -> Self {
        PfanetConfig {
            encoder: EncoderConfig::default(),
            c_high: 64,
            c_low: 32,
            reduction: 16,
            aspp_growth: 16,
            aspp_bottleneck: 32,
            head_channels: 16,
            max_depth: 80.0,
            seed: 42,
        }
    }
}

impl PfanetConfig {
    /// Roughly 0.2M parameters; small enough to overfit a handful of
    /// synthetic scenes in minutes on a CPU.
    pub fn tiny() -> Self {
        PfanetConfig {
            encoder: EncoderConfig {
                block_channels: [12, 24, 36, 48, 64],
                convs_per_block: 2,
            },
            c_high: 48,
            c_low: 32,
            reduction: 16,
            aspp_growth: 12,
            aspp_bottleneck: 24,
            head_channels: 16,
            max_depth: 80.0,
            seed: 42,
        }
    }

    /// A few thousand parameters; sized so full finite-difference sweeps
    /// stay cheap at 64-bit.
    pub fn gradcheck_tiny() -> Self {
        PfanetConfig {
            encoder: EncoderConfig {
                block_channels: [4, 4, 6, 6, 8],
                convs_per_block: 1,
            },
            c_high: 8,
            c_low: 4,
            reduction: 2,
            aspp_growth: 2,
            aspp_bottleneck: 4,
            head_channels: 4,
            max_depth: 80.0,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let r = self.reduction;
        if r == 0 {
            return Err(Error::Config("reduction must be >= 1".into()));
        }
        DcamConfig {
            channels: self.c_high,
            reduction: r,
        }
        .validate()?;
        SpamConfig {
            channels: self.c_low,
            reduction: r,
        }
        .validate()?;
        if self.c_high % 8 != 0 {
            return Err(Error::Config(format!(
                "c_high must be divisible by 8 for the three halving upsample steps, got {}",
                self.c_high
            )));
        }
        if self.c_low % 4 != 0 {
            return Err(Error::Config(format!(
                "c_low must be divisible by 4 for the two halving upsample steps, got {}",
                self.c_low
            )));
        }
        DenseAsppConfig {
            in_channels: self.c_high,
            growth: self.aspp_growth,
            bottleneck: self.aspp_bottleneck,
        }
        .validate()?;
        if self.head_channels == 0 {
            return Err(Error::Config("head_channels must be >= 1".into()));
        }
        if !(self.max_depth > 0.0) || !self.max_depth.is_finite() {
            return Err(Error::Config(format!(
                "max_depth must be positive and finite, got {}",
                self.max_depth
            )));
        }
        Ok(())
    }
}

pub struct PfanetModel<T: Scalar> {
    cfg: PfanetConfig,
    encoder: Encoder<T>,
    fuse_proj: Conv2dLayer<T>,
    aspp: DenseAspp<T>,
    dcam: Dcam<T>,
    spam: Spam<T>,
    low_proj: Conv2dLayer<T>,
    high_ups: Vec<UpconvLayer<T>>,
    low_ups: Vec<UpconvLayer<T>>,
    head_conv: Conv2dLayer<T>,
    head_out: Conv2dLayer<T>,
}

impl<T: Scalar> PfanetModel<T> {
    pub fn new(cfg: &PfanetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = derive_rng(cfg.seed, &[tag::INIT]);
        let bc = cfg.encoder.block_channels;
        let encoder = Encoder::new(&cfg.encoder, 3, &mut rng)?;
        let fuse_in = bc[2] + bc[3] + bc[4];
        let fuse_proj = Conv2dLayer::new(fuse_in, cfg.c_high, 1, 1, 1, &mut rng)?;
        let aspp = DenseAspp::new(
            &DenseAsppConfig {
                in_channels: cfg.c_high,
                growth: cfg.aspp_growth,
                bottleneck: cfg.aspp_bottleneck,
            },
            &mut rng,
        )?;
        let dcam = Dcam::new(
            &DcamConfig {
                channels: cfg.c_high,
                reduction: cfg.reduction,
            },
            &mut rng,
        )?;
        let spam = Spam::new(
            &SpamConfig {
                channels: cfg.c_low,
                reduction: cfg.reduction,
            },
            &mut rng,
        )?;
        let low_proj = Conv2dLayer::new(bc[0] + bc[1], cfg.c_low, 1, 1, 1, &mut rng)?;
        let mut high_ups = Vec::with_capacity(3);
        let mut c = cfg.c_high;
        for _ in 0..3 {
            high_ups.push(UpconvLayer::new(c, c / 2, &mut rng)?);
            c /= 2;
        }
        let mut low_ups = Vec::with_capacity(2);
        let mut c = cfg.c_low;
        for _ in 0..2 {
            low_ups.push(UpconvLayer::new(c, c / 2, &mut rng)?);
            c /= 2;
        }
        let head_in = cfg.c_high / 8 + cfg.c_low / 4;
        let head_conv = Conv2dLayer::new(head_in, cfg.head_channels, 3, 1, 1, &mut rng)?;
        let head_out = Conv2dLayer::new(cfg.head_channels, 1, 1, 1, 1, &mut rng)?;
        Ok(PfanetModel {
            cfg: cfg.clone(),
            encoder,
            fuse_proj,
            aspp,
            dcam,
            spam,
            low_proj,
            high_ups,
            low_ups,
            head_conv,
            head_out,
        })
    }

    pub fn config(&self) -> &PfanetConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &Encoder<T> {
        &self.encoder
    }

    pub fn aspp(&self) -> &DenseAspp<T> {
        &self.aspp
    }

    pub fn dcam(&self) -> &Dcam<T> {
        &self.dcam
    }

    pub fn dcam_mut(&mut self) -> &mut Dcam<T> {
        &mut self.dcam
    }

    pub fn spam(&self) -> &Spam<T> {
        &self.spam
    }

    pub fn spam_mut(&mut self) -> &mut Spam<T> {
        &mut self.spam
    }

    pub fn head_out_mut(&mut self) -> &mut Conv2dLayer<T> {
        &mut self.head_out
    }

    /// E4 up ×2 and E5 up ×4 (bilinear), concatenated with E3, projected
    /// to `c_high` channels with ReLU. Output sits at E3's resolution (H/8).
    pub fn fuse_high_level(
        &self,
        tape: &Tape<T>,
        e3: &Tensor<T>,
        e4: &Tensor<T>,
        e5: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (h3, w3) = (e3.shape()[2], e3.shape()[3]);
        if e4.shape()[2] * 2 != h3 || e4.shape()[3] * 2 != w3 {
            return Err(Error::shape("fuse_high_level E4", e3.shape(), e4.shape()));
        }
        if e5.shape()[2] * 4 != h3 || e5.shape()[3] * 4 != w3 {
            return Err(Error::shape("fuse_high_level E5", e3.shape(), e5.shape()));
        }
        let e4u = tape.bilinear_up(e4, 2)?;
        let e5u = tape.bilinear_up(e5, 4)?;
        let fused = tape.concat(&[e3, &e4u, &e5u], 1)?;
        Ok(tape.relu(&self.fuse_proj.forward(tape, &fused)?))
    }

    /// Full forward pass: N×3×H×W in, N×1×H×W depth out, H and W
    /// divisible by 32.
    pub fn forward(&self, tape: &Tape<T>, rgb: &Tensor<T>) -> Result<Tensor<T>> {
        let feats = self.encoder.forward(tape, rgb)?;

        // high-level path at H/8
        let fused = self.fuse_high_level(tape, &feats[2], &feats[3], &feats[4])?;
        let expanded = self.aspp.forward(tape, &fused)?;
        let mut high = self.dcam.forward(tape, &expanded)?;
        for up in &self.high_ups {
            high = up.forward(tape, &high)?;
        }

        // low-level path at H/4
        let e1_down = tape.nearest_down(&feats[0], 2)?;
        let low_cat = tape.concat(&[&e1_down, &feats[1]], 1)?;
        let projected = self.low_proj.forward(tape, &low_cat)?;
        let mut low = self.spam.forward(tape, &projected)?;
        for up in &self.low_ups {
            low = up.forward(tape, &low)?;
        }

        let joined = tape.concat(&[&high, &low], 1)?;
        let hidden = tape.relu(&self.head_conv.forward(tape, &joined)?);
        let logits = self.head_out.forward(tape, &hidden)?;
        let unit = tape.sigmoid(&logits);
        Ok(tape.scale(&unit, T::from_f64(self.cfg.max_depth)))
    }
}

impl<T: Scalar> ParamSet<T> for PfanetModel<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.encoder.visit(f);
        f("fuse.proj.weight", &self.fuse_proj.weight);
        f("fuse.proj.bias", &self.fuse_proj.bias);
        self.aspp.visit(f);
        self.dcam.visit(f);
        self.spam.visit(f);
        f("low.proj.weight", &self.low_proj.weight);
        f("low.proj.bias", &self.low_proj.bias);
        for (i, up) in self.high_ups.iter().enumerate() {
            f(&format!("high.up{}.conv.weight", i + 1), &up.conv.weight);
            f(&format!("high.up{}.conv.bias", i + 1), &up.conv.bias);
        }
        for (i, up) in self.low_ups.iter().enumerate() {
            f(&format!("low.up{}.conv.weight", i + 1), &up.conv.weight);
            f(&format!("low.up{}.conv.bias", i + 1), &up.conv.bias);
        }
        f("head.conv.weight", &self.head_conv.weight);
        f("head.conv.bias", &self.head_conv.bias);
        f("head.out.weight", &self.head_out.weight);
        f("head.out.bias", &self.head_out.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.encoder.visit_mut(f);
        f("fuse.proj.weight", &mut self.fuse_proj.weight);
        f("fuse.proj.bias", &mut self.fuse_proj.bias);
        self.aspp.visit_mut(f);
        self.dcam.visit_mut(f);
        self.spam.visit_mut(f);
        f("low.proj.weight", &mut self.low_proj.weight);
        f("low.proj.bias", &mut self.low_proj.bias);
        for (i, up) in self.high_ups.iter_mut().enumerate() {
            f(&format!("high.up{}.conv.weight", i + 1), &mut up.conv.weight);
            f(&format!("high.up{}.conv.bias", i + 1), &mut up.conv.bias);
        }
        for (i, up) in self.low_ups.iter_mut().enumerate() {
            f(&format!("low.up{}.conv.weight", i + 1), &mut up.conv.weight);
            f(&format!("low.up{}.conv.bias", i + 1), &mut up.conv.bias);
        }
        f("head.conv.weight", &mut self.head_conv.weight);
        f("head.conv.bias", &mut self.head_conv.bias);
        f("head.out.weight", &mut self.head_out.weight);
        f("head.out.bias", &mut self.head_out.bias);
    }
}

/// Architecture scalars stored alongside weights so a checkpoint is
/// self-describing. Keys are stable.
pub fn config_to_meta(cfg: &PfanetConfig) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (i, &c) in cfg.encoder.block_channels.iter().enumerate() {
        out.push((format!("meta.model.block{}", i + 1), c as f64));
    }
    out.push(("meta.model.convs_per_block".into(), cfg.encoder.convs_per_block as f64));
    out.push(("meta.model.c_high".into(), cfg.c_high as f64));
    out.push(("meta.model.c_low".into(), cfg.c_low as f64));
    out.push(("meta.model.reduction".into(), cfg.reduction as f64));
    out.push(("meta.model.aspp_growth".into(), cfg.aspp_growth as f64));
    out.push(("meta.model.aspp_bottleneck".into(), cfg.aspp_bottleneck as f64));
    out.push(("meta.model.head_channels".into(), cfg.head_channels as f64));
    out.push(("meta.model.max_depth".into(), cfg.max_depth));
    out.push(("meta.model.seed".into(), cfg.seed as f64));
    out
}

pub fn config_from_meta(get: &dyn Fn(&str) -> Option<f64>) -> Result<PfanetConfig> {
    let fetch = |key: &str| -> Result<f64> {
        get(key).ok_or_else(|| Error::Checkpoint(format!("missing metadata entry '{key}'")))
    };
    let as_count = |key: &str| -> Result<usize> {
        let v = fetch(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Checkpoint(format!(
                "metadata entry '{key}' must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    let mut block_channels = [0usize; 5];
    for (i, slot) in block_channels.iter_mut().enumerate() {
        *slot = as_count(&format!("meta.model.block{}", i + 1))?;
    }
    Ok(PfanetConfig {
        encoder: EncoderConfig {
            block_channels,
            convs_per_block: as_count("meta.model.convs_per_block")?,
        },
        c_high: as_count("meta.model.c_high")?,
        c_low: as_count("meta.model.c_low")?,
        reduction: as_count("meta.model.reduction")?,
        aspp_growth: as_count("meta.model.aspp_growth")?,
        aspp_bottleneck: as_count("meta.model.aspp_bottleneck")?,
        head_channels: as_count("meta.model.head_channels")?,
        max_depth: fetch("meta.model.max_depth")?,
        seed: as_count("meta.model.seed")? as u64,
    })
}

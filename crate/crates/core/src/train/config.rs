//! Flat `key = value` training configuration.
//!
//! Unknown and duplicate keys are errors, `#` starts a comment, and every
//! field round-trips through [`TrainConfig::to_text`], so a run is fully
//! reproducible from its written-out config alone.

use crate::data::{AugmentConfig, SynthSceneSpec};
use crate::error::{Error, Result};
use crate::model::PfanetConfig;
use crate::objectives::LossWeights;
use crate::scalar::Dtype;
use crate::train::optim::AdamParams;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: PfanetConfig,
    /// Dataset directory; when absent, training data is synthesized.
    pub data_root: Option<PathBuf>,
    pub split: String,
    /// Number of generated samples in synthetic mode.
    pub synth_count: usize,
    pub synth: SynthSceneSpec,
    pub augment_enabled: bool,
    pub augment: AugmentConfig,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Dtype,
    pub lr: f64,
    pub lr_power: f64,
    /// Step the schedule once per epoch instead of once per iteration.
    pub lr_per_epoch: bool,
    pub adam: AdamParams,
    pub loss: LossWeights,
    pub out_dir: PathBuf,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: PfanetConfig::default(),
            data_root: None,
            split: "train.txt".into(),
            synth_count: 4,
            synth: SynthSceneSpec::default(),
            augment_enabled: true,
            augment: AugmentConfig::default(),
            epochs: 50,
            batch_size: 4,
            seed: 42,
            precision: Dtype::F64,
            lr: 1e-4,
            lr_power: 0.9,
            lr_per_epoch: false,
            adam: AdamParams::default(),
            loss: LossWeights::default(),
            out_dir: PathBuf::from("run"),
            checkpoint_every: 1,
        }
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {v:?}"
        ))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(str::trim)
        .map(|s| parse_usize(key, s))
        .collect()
}

impl TrainConfig {
    /// Parses the flat config format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let v = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            cfg.apply(key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = parse_u64(key, v)?,
            "batch_size" => self.batch_size = parse_usize(key, v)?,
            "seed" => {
                self.seed = parse_u64(key, v)?;
                self.model.seed = self.seed;
            }
            "precision" => {
                self.precision = match v {
                    "f32" => Dtype::F32,
                    "f64" => Dtype::F64,
                    _ => {
                        return Err(Error::Config(format!(
                            "precision must be f32 or f64, got {v:?}"
                        )))
                    }
                }
            }
            "lr" => self.lr = parse_f64(key, v)?,
            "lr_power" => self.lr_power = parse_f64(key, v)?,
            "lr_per_epoch" => self.lr_per_epoch = parse_bool(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_u64(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "data.root" => {
                self.data_root = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "data.split" => self.split = v.to_string(),
            "synth.count" => self.synth_count = parse_usize(key, v)?,
            "synth.height" => self.synth.height = parse_usize(key, v)?,
            "synth.width" => self.synth.width = parse_usize(key, v)?,
            "synth.min_objects" => self.synth.min_objects = parse_usize(key, v)?,
            "synth.max_objects" => self.synth.max_objects = parse_usize(key, v)?,
            "synth.near" => self.synth.near = parse_f64(key, v)?,
            "synth.far" => self.synth.far = parse_f64(key, v)?,
            "synth.invalid_fraction" => self.synth.invalid_fraction = parse_f64(key, v)?,
            "augment.enabled" => self.augment_enabled = parse_bool(key, v)?,
            "augment.rotation_degrees" => self.augment.rotation_degrees = parse_f64(key, v)?,
            "augment.hflip_prob" => self.augment.hflip_prob = parse_f64(key, v)?,
            "augment.brightness" => self.augment.brightness = parse_f64(key, v)?,
            "augment.contrast" => self.augment.contrast = parse_f64(key, v)?,
            "augment.color" => self.augment.color = parse_f64(key, v)?,
            "augment.crop_h" => self.augment.crop_h = parse_usize(key, v)?,
            "augment.crop_w" => self.augment.crop_w = parse_usize(key, v)?,
            "augment.crop_jitter" => self.augment.crop_jitter = parse_f64(key, v)?,
            "loss.lambda" => self.loss.lambda = parse_f64(key, v)?,
            "loss.alpha" => self.loss.alpha = parse_f64(key, v)?,
            "loss.beta" => self.loss.beta = parse_f64(key, v)?,
            "loss.spacings" => self.loss.spacings = parse_list(key, v)?,
            "adam.beta1" => self.adam.beta1 = parse_f64(key, v)?,
            "adam.beta2" => self.adam.beta2 = parse_f64(key, v)?,
            "adam.epsilon" => self.adam.epsilon = parse_f64(key, v)?,
            "model.c_high" => self.model.c_high = parse_usize(key, v)?,
            "model.c_low" => self.model.c_low = parse_usize(key, v)?,
            "model.reduction" => self.model.reduction = parse_usize(key, v)?,
            "model.aspp_growth" => self.model.aspp_growth = parse_usize(key, v)?,
            "model.aspp_bottleneck" => self.model.aspp_bottleneck = parse_usize(key, v)?,
            "model.head_channels" => self.model.head_channels = parse_usize(key, v)?,
            "model.max_depth" => self.model.max_depth = parse_f64(key, v)?,
            "model.encoder.channels" => {
                let list = parse_list(key, v)?;
                let arr: [usize; 5] = list.try_into().map_err(|_| {
                    Error::Config(format!("{key}: expected exactly 5 channel widths"))
                })?;
                self.model.encoder.block_channels = arr;
            }
            "model.encoder.convs_per_block" => {
                self.model.encoder.convs_per_block = parse_usize(key, v)?
            }
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adam.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.lr_power.is_finite() && self.lr_power >= 0.0) {
            return Err(Error::Config("lr_power must be >= 0".into()));
        }
        if self.data_root.is_none() {
            if self.synth_count == 0 {
                return Err(Error::Config(
                    "synthetic mode needs synth.count >= 1".into(),
                ));
            }
            self.synth.validate()?;
        }
        if self.augment_enabled {
            self.augment.validate()?;
        }
        Ok(())
    }

    /// Serializes every field in parse-compatible form.
    pub fn to_text(&self) -> String {
        let list = |xs: &[usize]| {
            xs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "precision",
            match self.precision {
                Dtype::F32 => "f32".into(),
                Dtype::F64 => "f64".into(),
            },
        );
        kv("lr", self.lr.to_string());
        kv("lr_power", self.lr_power.to_string());
        kv("lr_per_epoch", self.lr_per_epoch.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv(
            "data.root",
            self.data_root
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("data.split", self.split.clone());
        kv("synth.count", self.synth_count.to_string());
        kv("synth.height", self.synth.height.to_string());
        kv("synth.width", self.synth.width.to_string());
        kv("synth.min_objects", self.synth.min_objects.to_string());
        kv("synth.max_objects", self.synth.max_objects.to_string());
        kv("synth.near", self.synth.near.to_string());
        kv("synth.far", self.synth.far.to_string());
        kv(
            "synth.invalid_fraction",
            self.synth.invalid_fraction.to_string(),
        );
        kv("augment.enabled", self.augment_enabled.to_string());
        kv(
            "augment.rotation_degrees",
            self.augment.rotation_degrees.to_string(),
        );
        kv("augment.hflip_prob", self.augment.hflip_prob.to_string());
        kv("augment.brightness", self.augment.brightness.to_string());
        kv("augment.contrast", self.augment.contrast.to_string());
        kv("augment.color", self.augment.color.to_string());
        kv("augment.crop_h", self.augment.crop_h.to_string());
        kv("augment.crop_w", self.augment.crop_w.to_string());
        kv("augment.crop_jitter", self.augment.crop_jitter.to_string());
        kv("loss.lambda", self.loss.lambda.to_string());
        kv("loss.alpha", self.loss.alpha.to_string());
        kv("loss.beta", self.loss.beta.to_string());
        kv("loss.spacings", list(&self.loss.spacings));
        kv("adam.beta1", self.adam.beta1.to_string());
        kv("adam.beta2", self.adam.beta2.to_string());
        kv("adam.epsilon", self.adam.epsilon.to_string());
        kv("model.c_high", self.model.c_high.to_string());
        kv("model.c_low", self.model.c_low.to_string());
        kv("model.reduction", self.model.reduction.to_string());
        kv("model.aspp_growth", self.model.aspp_growth.to_string());
        kv(
            "model.aspp_bottleneck",
            self.model.aspp_bottleneck.to_string(),
        );
        kv("model.head_channels", self.model.head_channels.to_string());
        kv("model.max_depth", self.model.max_depth.to_string());
        kv(
            "model.encoder.channels",
            list(&self.model.encoder.block_channels),
        );
        kv(
            "model.encoder.convs_per_block",
            self.model.encoder.convs_per_block.to_string(),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_training_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.loss.lambda, 0.85);
        assert_eq!(c.loss.alpha, 10.0);
        assert_eq!(c.loss.beta, 2.0);
        assert_eq!(c.loss.spacings, vec![1, 2, 4, 8, 16]);
        assert_eq!(c.model.reduction, 16);
        assert_eq!(c.adam.beta1, 0.9);
        assert_eq!(c.adam.beta2, 0.999);
        assert_eq!(c.adam.epsilon, 1e-6);
        assert_eq!(c.lr, 1e-4);
        assert_eq!(c.lr_power, 0.9);
        assert_eq!(c.model.max_depth, 80.0);
        assert_eq!(c.epochs, 50);
    }

    #[test]
    fn parses_overrides_comments_and_blank_lines() {
        let text = "\n# overfit recipe\nepochs = 300\nbatch_size = 2  # small\nseed = 7\nloss.spacings = 1, 2\naugment.enabled = false\n";
        let c = TrainConfig::parse(text).unwrap();
        assert_eq!(c.epochs, 300);
        assert_eq!(c.batch_size, 2);
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.seed, 7);
        assert_eq!(c.loss.spacings, vec![1, 2]);
        assert!(!c.augment_enabled);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_errors() {
        assert!(matches!(
            TrainConfig::parse("lr_rate = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TrainConfig::parse("epochs = 1\nepochs = 2"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TrainConfig::parse("epochs"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let mut c = TrainConfig::default();
        c.epochs = 3;
        c.seed = 123;
        c.model.seed = 123;
        c.precision = Dtype::F32;
        c.data_root = Some(PathBuf::from("/tmp/data"));
        c.loss.spacings = vec![1, 4];
        let back = TrainConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::parse("batch_size = 0").is_err());
        assert!(TrainConfig::parse("lr = -1").is_err());
        assert!(TrainConfig::parse("precision = f16").is_err());
        assert!(TrainConfig::parse("adam.beta1 = 1.5").is_err());
        assert!(TrainConfig::parse("synth.height = 63").is_err());
    }
}

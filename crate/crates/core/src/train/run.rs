//! The training loop.
//!
//! One optimizer step per batch: fresh tape, per-sample forward and loss,
//! batch-mean total, backward, Adam. Every random draw is keyed by
//! (seed, purpose, epoch, index), so a resumed run replays the exact
//! stream the uninterrupted run would have seen.

use crate::data::{augment, epoch_batches, generate_synth, Dataset, DepthSample, SynthSceneSpec};
use crate::error::{Error, Result};
use crate::model::PfanetModel;
use crate::params::ParamSet;
use crate::rng::{derive_rng, tag};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tape;
use crate::train::checkpoint::{load_checkpoint, save_checkpoint};
use crate::train::config::TrainConfig;
use crate::train::optim::{adam_step, AdamState, LrSchedule};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const LOG_HEADER: &str = "step,lr,L_d,L_g,total";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub l_d: f64,
    pub l_g: f64,
    pub total: f64,
}

impl StepLog {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.lr, self.l_d, self.l_g, self.total
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub steps_run: u64,
    /// One entry per optimizer step executed in this process.
    pub logs: Vec<StepLog>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Loads or synthesizes the training set described by the config.
pub fn load_training_set(cfg: &TrainConfig) -> Result<Vec<DepthSample>> {
    match &cfg.data_root {
        Some(root) => {
            let ds = Dataset::open(root.clone(), &cfg.split)?;
            (0..ds.len()).map(|i| ds.load(i)).collect()
        }
        None => (0..cfg.synth_count)
            .map(|i| {
                generate_synth(&SynthSceneSpec {
                    seed: cfg.seed.wrapping_add(i as u64),
                    ..cfg.synth.clone()
                })
            })
            .collect(),
    }
}

/// Runs training at the precision named in the config.
pub fn train_dispatch(cfg: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    match cfg.precision {
        Dtype::F32 => train::<f32>(cfg, resume),
        Dtype::F64 => train::<f64>(cfg, resume),
    }
}

pub fn train<T: Scalar>(cfg: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = load_training_set(cfg)?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let bpe = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = if cfg.lr_per_epoch {
        cfg.epochs
    } else {
        cfg.epochs * bpe
    };
    let schedule = LrSchedule::new(cfg.lr, cfg.lr_power, total_steps.max(1))?;

    let (mut model, mut opt, start_step) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint::<T>(path)?;
            if ckpt.model.config() != &cfg.model {
                return Err(Error::Checkpoint(
                    "checkpoint architecture differs from the config".into(),
                ));
            }
            if ckpt.seed != cfg.seed {
                return Err(Error::Checkpoint(format!(
                    "checkpoint seed {} differs from config seed {}",
                    ckpt.seed, cfg.seed
                )));
            }
            (ckpt.model, ckpt.opt, ckpt.step)
        }
        None => (
            PfanetModel::<T>::new(&cfg.model)?,
            AdamState::new(),
            0,
        ),
    };

    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_text())?;
    let log_path = cfg.out_dir.join("train.csv");
    let mut log = if resume.is_some() && log_path.exists() {
        fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "{LOG_HEADER}")?;
        f
    };

    let mut logs = Vec::new();
    for epoch in 0..cfg.epochs {
        if (epoch + 1) * bpe <= start_step {
            continue; // fully covered by the resumed checkpoint
        }
        let batches = epoch_batches(n, cfg.batch_size, cfg.seed, epoch)?;
        for (bi, batch) in batches.iter().enumerate() {
            let step = epoch * bpe + bi as u64;
            if step < start_step {
                continue;
            }
            let lr = if cfg.lr_per_epoch {
                schedule.lr_at(epoch)?
            } else {
                schedule.lr_at(step)?
            };

            let ids: Vec<&str> = batch.iter().map(|&i| samples[i].id.as_str()).collect();
            let result = (|| -> Result<StepLog> {
                let tape = Tape::new();
                let mut totals = Vec::with_capacity(batch.len());
                let mut l_d_sum = 0.0;
                let mut l_g_sum = 0.0;
                for &idx in batch {
                    let prepared = if cfg.augment_enabled {
                        let mut rng =
                            derive_rng(cfg.seed, &[tag::AUGMENT, epoch, idx as u64]);
                        augment(&samples[idx], &cfg.augment, &mut rng)?
                    } else {
                        samples[idx].clone()
                    };
                    let x = prepared.rgb_tensor::<T>()?;
                    let gt = prepared.depth_tensor::<T>()?;
                    let pred = model.forward(&tape, &x)?;
                    let terms = crate::objectives::total_loss(
                        &tape,
                        &pred,
                        &gt,
                        &prepared.mask,
                        &cfg.loss,
                    )?;
                    l_d_sum += terms.scale_invariant.item().as_f64();
                    l_g_sum += terms.gradient.item().as_f64();
                    totals.push(terms.total);
                }
                let mut acc = totals[0].clone();
                for t in &totals[1..] {
                    acc = tape.add(&acc, t)?;
                }
                let batch_total = tape.scale(&acc, T::from_f64(1.0 / batch.len() as f64));
                let entry = StepLog {
                    step,
                    lr,
                    l_d: l_d_sum / batch.len() as f64,
                    l_g: l_g_sum / batch.len() as f64,
                    total: batch_total.item().as_f64(),
                };
                if !entry.total.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss {}", entry.total)));
                }
                model.clear_grads();
                tape.backward(&batch_total)?;
                adam_step(&mut model, &mut opt, &cfg.adam, lr)?;
                Ok(entry)
            })();
            match result {
                Ok(entry) => {
                    writeln!(log, "{}", entry.csv_line())?;
                    logs.push(entry);
                }
                Err(Error::Numeric(msg)) => {
                    let emergency = cfg.out_dir.join("emergency.pfat");
                    save_checkpoint(&emergency, &model, &opt, step, epoch, cfg.seed)?;
                    log.flush()?;
                    return Err(Error::Numeric(format!(
                        "{msg}; at step {step} on batch [{}]; state saved to {}",
                        ids.join(", "),
                        emergency.display()
                    )));
                }
                Err(e) => return Err(e),
            }
        }
        let done = (epoch + 1) * bpe;
        if (epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs {
            let path = cfg.out_dir.join(format!("ckpt-epoch-{}.pfat", epoch + 1));
            save_checkpoint(&path, &model, &opt, done, epoch + 1, cfg.seed)?;
            log.flush()?;
        }
    }

    let final_path = cfg.out_dir.join("final.pfat");
    save_checkpoint(
        &final_path,
        &model,
        &opt,
        cfg.epochs * bpe,
        cfg.epochs,
        cfg.seed,
    )?;
    log.flush()?;
    Ok(TrainOutcome {
        steps_run: cfg.epochs * bpe,
        logs,
        final_checkpoint: final_path,
        log_path,
    })
}

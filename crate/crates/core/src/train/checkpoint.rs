//! Self-describing checkpoints.
//!
//! A checkpoint is a named-tensor container holding `param.*` weights,
//! `opt.*.m` / `opt.*.v` optimizer moments, and scalar `meta.*` entries
//! (step, epoch, optimizer step count, seed, and the architecture). That
//! is everything needed to resume a run bit for bit.

use crate::error::{Error, Result};
use crate::model::{config_from_meta, config_to_meta, PfanetModel};
use crate::params::ParamSet;
use crate::scalar::{Dtype, Scalar};
use crate::tensor::pfat::{self, NamedTensor};
use crate::tensor::Tensor;
use crate::train::optim::{AdamSlot, AdamState};
use std::collections::BTreeMap;
use std::path::Path;

pub struct Checkpoint<T: Scalar> {
    pub model: PfanetModel<T>,
    pub opt: AdamState<T>,
    /// Completed optimizer steps.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub seed: u64,
}

fn meta_tensor(name: &str, value: f64) -> NamedTensor {
    let t = Tensor::<f64>::from_f64_slice(&[value], &[1]).expect("scalar");
    NamedTensor::from_tensor(name, &t)
}

/// Writes model, optimizer and run counters to `path`.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &PfanetModel<T>,
    opt: &AdamState<T>,
    step: u64,
    epoch: u64,
    seed: u64,
) -> Result<()> {
    let mut tensors = Vec::new();
    model.visit_params(&mut |name, t| {
        tensors.push(NamedTensor::from_tensor(&format!("param.{name}"), t));
    });
    for (name, slot) in opt.slots() {
        let shape = [slot.m.len()];
        let m = Tensor::from_vec(slot.m.clone(), &shape)?;
        let v = Tensor::from_vec(slot.v.clone(), &shape)?;
        tensors.push(NamedTensor::from_tensor(&format!("opt.{name}.m"), &m));
        tensors.push(NamedTensor::from_tensor(&format!("opt.{name}.v"), &v));
    }
    tensors.push(meta_tensor("meta.step", step as f64));
    tensors.push(meta_tensor("meta.epoch", epoch as f64));
    tensors.push(meta_tensor("meta.adam_t", opt.step_count() as f64));
    tensors.push(meta_tensor("meta.seed", seed as f64));
    for (key, value) in config_to_meta(model.config()) {
        tensors.push(meta_tensor(&key, value));
    }
    pfat::save(path, &tensors)
}

/// Element dtype of the stored model, read without materializing it.
pub fn checkpoint_dtype(path: &Path) -> Result<Dtype> {
    let tensors = pfat::load(path)?;
    tensors
        .iter()
        .find(|t| t.name.starts_with("param."))
        .map(|t| t.data.dtype())
        .ok_or_else(|| Error::Checkpoint("checkpoint holds no parameters".into()))
}

/// Rebuilds the model and optimizer stored at `path`. The requested
/// scalar type must match the stored dtype.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let tensors = pfat::load(path)?;
    let by_name: BTreeMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();

    let meta = |key: &str| -> Option<f64> {
        by_name.get(key).and_then(|t| t.scalar_value().ok())
    };
    let meta_count = |key: &str| -> Result<u64> {
        let v = meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata entry '{key}'")))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Checkpoint(format!(
                "metadata entry '{key}' must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as u64)
    };

    let cfg = config_from_meta(&meta)?;
    let mut model = PfanetModel::<T>::new(&cfg)?;

    for (name, current) in model.named_params() {
        let key = format!("param.{name}");
        let stored = by_name
            .get(key.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        let tensor: Tensor<T> = stored.to_tensor()?;
        if tensor.shape() != current.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has shape {:?} on disk but the architecture needs {:?}",
                tensor.shape(),
                current.shape()
            )));
        }
        model.set_param(&name, tensor);
    }

    let mut slots: BTreeMap<String, AdamSlot<T>> = BTreeMap::new();
    for t in &tensors {
        let Some(rest) = t.name.strip_prefix("opt.") else {
            continue;
        };
        let Some(pname) = rest.strip_suffix(".m") else {
            continue;
        };
        let vkey = format!("opt.{pname}.v");
        let vt = by_name
            .get(vkey.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("optimizer slot {pname} lacks .v")))?;
        let m: Tensor<T> = t.to_tensor()?;
        let v: Tensor<T> = vt.to_tensor()?;
        slots.insert(
            pname.to_string(),
            AdamSlot {
                m: m.data().to_vec(),
                v: v.data().to_vec(),
            },
        );
    }

    Ok(Checkpoint {
        model,
        opt: AdamState::from_parts(meta_count("meta.adam_t")?, slots),
        step: meta_count("meta.step")?,
        epoch: meta_count("meta.epoch")?,
        seed: meta_count("meta.seed")?,
    })
}

//! Adam and the polynomial learning-rate schedule.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamSlot<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Optimizer state across all parameters, keyed by parameter name so it
/// survives checkpointing independently of visit order.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    t: u64,
    slots: BTreeMap<String, AdamSlot<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState {
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    /// Number of applied steps.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn slots(&self) -> impl Iterator<Item = (&String, &AdamSlot<T>)> {
        self.slots.iter()
    }

    /// Rebuilds state from checkpoint data.
    pub fn from_parts(t: u64, slots: BTreeMap<String, AdamSlot<T>>) -> Self {
        AdamState { t, slots }
    }
}

/// One Adam update over every parameter of `model`, consuming the
/// gradients left by the last backward pass (parameters come back with
/// cleared gradients). Aborts before touching anything if any gradient
/// is non-finite.
pub fn adam_step<T: Scalar, M: ParamSet<T>>(
    model: &mut M,
    state: &mut AdamState<T>,
    hp: &AdamParams,
    lr: f64,
) -> Result<()> {
    hp.validate()?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
    }

    let mut bad: Option<String> = None;
    model.visit_params(&mut |name, t| {
        if bad.is_none() {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.as_f64().is_finite()) {
                    bad = Some(name.to_string());
                }
            }
        }
    });
    if let Some(name) = bad {
        return Err(Error::Numeric(format!(
            "non-finite gradient in parameter {name}"
        )));
    }

    state.t += 1;
    let t = state.t;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    // Bias corrections, computed at f64 then narrowed once.
    let bc1 = T::from_f64(1.0 - hp.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - hp.beta2.powi(t as i32));
    let eps = T::from_f64(hp.epsilon);
    let lr_t = T::from_f64(lr);

    let slots = &mut state.slots;
    let mut failure: Option<Error> = None;
    model.visit_params_mut(&mut |name, tensor| {
        if failure.is_some() {
            return;
        }
        let n = tensor.numel();
        let grad = tensor.grad().unwrap_or_else(|| vec![T::zero(); n]);
        let slot = slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        if slot.m.len() != n || slot.v.len() != n {
            failure = Some(Error::Checkpoint(format!(
                "optimizer slot for {name} holds {} values but the parameter has {n}",
                slot.m.len()
            )));
            return;
        }
        let mut data = tensor.data().to_vec();
        for i in 0..n {
            let g = grad[i];
            slot.m[i] = b1 * slot.m[i] + one_m_b1 * g;
            slot.v[i] = b2 * slot.v[i] + one_m_b2 * g * g;
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            data[i] = data[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        let shape = tensor.shape().to_vec();
        match Tensor::from_vec(data, &shape) {
            Ok(t) => *tensor = t.into_param(),
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Polynomial decay: lr(t) = base · (1 − t/total)^power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub power: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(base: f64, power: f64, total_steps: u64) -> Result<Self> {
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::Config("base learning rate must be positive".into()));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::Config("lr power must be >= 0".into()));
        }
        if total_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        Ok(LrSchedule {
            base,
            power,
            total_steps,
        })
    }

    pub fn lr_at(&self, t: u64) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::invalid(format!(
                "step {t} beyond schedule horizon {}",
                self.total_steps
            )));
        }
        let frac = 1.0 - t as f64 / self.total_steps as f64;
        Ok(self.base * frac.powf(self.power))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal one-tensor ParamSet for driving the optimizer directly.
    struct Toy {
        w: Tensor<f64>,
    }

    impl Toy {
        fn new(vals: &[f64]) -> Self {
            Toy {
                w: Tensor::from_f64_slice(vals, &[vals.len()])
                    .unwrap()
                    .into_param(),
            }
        }
    }

    impl ParamSet<f64> for Toy {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<f64>)) {
            f("w", &self.w);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>)) {
            f("w", &mut self.w);
        }
    }

    #[test]
    fn first_step_moves_by_roughly_signed_lr() {
        let mut toy = Toy::new(&[1.0]);
        toy.w.set_grad(vec![0.5]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut toy, &mut state, &AdamParams::default(), 1e-4).unwrap();
        let expected = 1.0 - 1e-4 * (0.5 / (0.5 + 1e-6));
        assert!((toy.w.data()[0] - expected).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_bitwise_unchanged() {
        let mut toy = Toy::new(&[0.3, -0.7]);
        toy.w.set_grad(vec![0.0, 0.0]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut toy, &mut state, &AdamParams::default(), 1e-2).unwrap();
        assert_eq!(toy.w.data(), &[0.3, -0.7]);
    }

    #[test]
    fn zero_lr_is_a_pure_state_update() {
        let mut toy = Toy::new(&[0.4]);
        toy.w.set_grad(vec![2.0]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut toy, &mut state, &AdamParams::default(), 0.0).unwrap();
        assert_eq!(toy.w.data(), &[0.4]);
        let slot = state.slots().next().unwrap().1;
        assert!(slot.m[0] != 0.0 && slot.v[0] != 0.0);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn ten_steps_match_an_independent_scalar_recurrence() {
        // Quadratic bowl: loss = theta^2 / 2, gradient = theta.
        let hp = AdamParams::default();
        let lr = 0.05;
        let mut toy = Toy::new(&[1.5]);
        let mut state = AdamState::new();

        let (mut theta, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
        let mut last_loss = f64::INFINITY;
        for t in 1..=10 {
            toy.w.set_grad(vec![toy.w.data()[0]]).unwrap();
            adam_step(&mut toy, &mut state, &hp, lr).unwrap();

            let g = theta;
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let m_hat = m / (1.0 - hp.beta1.powi(t));
            let v_hat = v / (1.0 - hp.beta2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);

            assert!(
                (toy.w.data()[0] - theta).abs() < 1e-12,
                "diverged from the scalar recurrence at step {t}"
            );
            let loss = 0.5 * theta * theta;
            assert!(loss < last_loss, "loss rose at step {t}");
            last_loss = loss;
        }
    }

    #[test]
    fn non_finite_gradient_aborts_naming_the_parameter() {
        let mut toy = Toy::new(&[0.4]);
        toy.w.set_grad(vec![f64::NAN]).unwrap();
        let mut state = AdamState::new();
        let err = adam_step(&mut toy, &mut state, &AdamParams::default(), 1e-4).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains('w'), "message {msg} lacks the name"),
            other => panic!("expected Numeric, got {other:?}"),
        }
        assert_eq!(toy.w.data(), &[0.4]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn schedule_hits_documented_endpoints_and_midpoint() {
        let s = LrSchedule::new(1e-4, 0.9, 1000).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 1e-4);
        assert_eq!(s.lr_at(1000).unwrap(), 0.0);
        let mid = s.lr_at(500).unwrap();
        assert!((mid - 5.3589e-5).abs() < 1e-9, "midpoint {mid}");
        assert!(s.lr_at(1001).is_err());
    }

    #[test]
    fn schedule_is_non_increasing() {
        let s = LrSchedule::new(1e-4, 0.9, 321).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..=321 {
            let lr = s.lr_at(t).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }
}

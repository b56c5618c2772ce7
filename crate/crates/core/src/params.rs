//! Named-parameter traversal shared by the optimizer, checkpointing, and
//! gradient checking.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything owning a fixed set of named parameter tensors. Visit order is
/// part of the contract: it must be deterministic and identical between
/// `visit_params` and `visit_params_mut`.
pub trait ParamSet<T: Scalar> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));

    /// Named handles in visit order (handles share storage with the model).
    fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.numel());
        n
    }

    fn get_param(&self, name: &str) -> Option<Tensor<T>> {
        let mut found = None;
        self.visit_params(&mut |n, t| {
            if n == name {
                found = Some(t.clone());
            }
        });
        found
    }

    /// Replaces a parameter's storage, keeping it a trainable leaf.
    /// Returns false if the name is unknown.
    fn set_param(&mut self, name: &str, value: Tensor<T>) -> bool {
        let mut hit = false;
        let mut value = Some(value);
        self.visit_params_mut(&mut |n, t| {
            if n == name {
                if let Some(v) = value.take() {
                    *t = v.into_param();
                    hit = true;
                }
            }
        });
        hit
    }

    fn clear_grads(&self) {
        self.visit_params(&mut |_, t| t.clear_grad());
    }
}

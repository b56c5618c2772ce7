use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorId};

/// Backward rule for one recorded op. Receives the adjoint of the node's
/// output and a per-input mask saying which gradients are actually needed;
/// returns one gradient buffer per input (`None` where the mask is false).
pub(crate) type BackFn<T> = dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>;

struct Node<T: Scalar> {
    inputs: Vec<Tensor<T>>,
    output_id: TensorId,
    wants: Vec<bool>,
    backward: Box<BackFn<T>>,
}

/// Records ops for reverse-mode differentiation.
///
/// A recording tape may run [`Tape::backward`] exactly once; build a fresh
/// tape per training step. An inference tape records nothing and rejects
/// backward, which keeps evaluation memory flat.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    produced: RefCell<HashSet<TensorId>>,
    recording: bool,
    consumed: Cell<bool>,
}

impl<T: Scalar> Tape<T> {
    /// Recording tape for training steps and gradient checks.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            produced: RefCell::new(HashSet::new()),
            recording: true,
            consumed: Cell::new(false),
        }
    }

    /// Forward-only tape. Ops behave identically but nothing is recorded.
    pub fn inference() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            produced: RefCell::new(HashSet::new()),
            recording: false,
            consumed: Cell::new(false),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Registers a computed op. `backward` must return gradients shaped like
    /// the corresponding inputs. No-op on an inference tape.
    pub(crate) fn record(
        &self,
        inputs: &[Tensor<T>],
        output: &Tensor<T>,
        backward: Box<BackFn<T>>,
    ) {
        if !self.recording {
            return;
        }
        let produced = self.produced.borrow();
        let wants: Vec<bool> = inputs
            .iter()
            .map(|t| t.requires_grad() || produced.contains(&t.id()))
            .collect();
        drop(produced);
        self.produced.borrow_mut().insert(output.id());
        self.nodes.borrow_mut().push(Node {
            inputs: inputs.to_vec(),
            output_id: output.id(),
            wants,
            backward,
        });
    }

    /// Runs reverse accumulation from a scalar `root`, filling `grad` on
    /// every parameter leaf that `root` depends on.
    ///
    /// Errors: non-scalar root, inference or empty tape, a second backward
    /// on the same tape, a root this tape never produced, or a leaf that
    /// still holds a gradient from an earlier tape.
    pub fn backward(&self, root: &Tensor<T>) -> Result<()> {
        if !self.recording {
            return Err(Error::invalid(
                "backward on an inference tape; build the graph with Tape::new",
            ));
        }
        if self.consumed.get() {
            return Err(Error::invalid(
                "backward already ran on this tape; build a fresh tape per step",
            ));
        }
        if root.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward root must be a scalar, got shape {:?}",
                root.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::invalid("backward on an empty tape"));
        }
        if !self.produced.borrow().contains(&root.id()) {
            return Err(Error::invalid(
                "backward root was not produced by this tape",
            ));
        }
        self.consumed.set(true);

        let mut adjoints: HashMap<TensorId, Vec<T>> = HashMap::new();
        adjoints.insert(root.id(), vec![T::one(); 1]);

        for node in nodes.iter().rev() {
            // Nodes off the path from the root never receive an adjoint.
            let Some(out_adj) = adjoints.remove(&node.output_id) else {
                continue;
            };
            let grads = (node.backward)(&out_adj, &node.wants);
            debug_assert_eq!(grads.len(), node.inputs.len());
            for (slot, grad) in node.inputs.iter().zip(grads) {
                let Some(grad) = grad else { continue };
                debug_assert_eq!(grad.len(), slot.numel());
                match adjoints.entry(slot.id()) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        for (acc, g) in e.get_mut().iter_mut().zip(&grad) {
                            *acc = *acc + *g;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(grad);
                    }
                }
            }
        }

        // Leaves are inputs this tape never produced; move their adjoints
        // onto the tensors, first occurrence wins and later ones were
        // already merged above.
        let produced = self.produced.borrow();
        let mut written: HashSet<TensorId> = HashSet::new();
        for node in nodes.iter() {
            for input in &node.inputs {
                if !input.requires_grad()
                    || produced.contains(&input.id())
                    || written.contains(&input.id())
                {
                    continue;
                }
                if let Some(adj) = adjoints.remove(&input.id()) {
                    input.set_grad(adj)?;
                    written.insert(input.id());
                }
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar_root() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[1.0, 2.0], &[2]).unwrap().into_param();
        let y = tape.mul(&x, &x).unwrap();
        let err = tape.backward(&y).unwrap_err();
        assert!(err.to_string().contains("scalar"));
    }

    #[test]
    fn backward_on_empty_tape_fails() {
        let tape = Tape::<f64>::new();
        let x = Tensor::scalar(1.0);
        assert!(tape.backward(&x).is_err());
    }

    #[test]
    fn backward_on_inference_tape_fails() {
        let tape = Tape::<f64>::inference();
        let x = Tensor::from_f64_slice(&[1.0], &[1]).unwrap().into_param();
        let y = tape.sum_all(&x).unwrap();
        assert!(tape.backward(&y).is_err());
        assert_eq!(tape.num_nodes(), 0);
    }

    #[test]
    fn backward_twice_on_one_tape_fails() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[3.0], &[1]).unwrap().into_param();
        let y = tape.sum_all(&x).unwrap();
        tape.backward(&y).unwrap();
        let err = tape.backward(&y).unwrap_err();
        assert!(err.to_string().contains("fresh tape"));
    }

    #[test]
    fn backward_root_must_come_from_this_tape() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[3.0], &[1]).unwrap().into_param();
        let _ = tape.sum_all(&x).unwrap();
        let stranger = Tensor::<f64>::scalar(1.0);
        assert!(tape.backward(&stranger).is_err());
    }

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(x * x), x = [1, 2] -> dloss/dx = [2, 4]
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[1.0, 2.0], &[2]).unwrap().into_param();
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.sum_all(&sq).unwrap();
        assert_eq!(loss.item(), 5.0);
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn fanout_accumulates_adjoints() {
        // y = x + x -> dy/dx = 2 per element
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[1.0, -1.0], &[2]).unwrap().into_param();
        let y = tape.add(&x, &x).unwrap();
        let loss = tape.sum_all(&y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn stale_leaf_gradient_is_an_error() {
        let x = Tensor::from_f64_slice(&[2.0], &[1]).unwrap().into_param();
        {
            let tape = Tape::<f64>::new();
            let loss = tape.sum_all(&x).unwrap();
            tape.backward(&loss).unwrap();
        }
        let tape = Tape::<f64>::new();
        let loss = tape.sum_all(&x).unwrap();
        let err = tape.backward(&loss).unwrap_err();
        assert!(err.to_string().contains("already present"));
        x.clear_grad();
    }

    #[test]
    fn unreached_branches_get_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[1.0], &[1]).unwrap().into_param();
        let y = Tensor::from_f64_slice(&[5.0], &[1]).unwrap().into_param();
        let _dead = tape.mul(&y, &y).unwrap();
        let loss = tape.sum_all(&x).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
        assert!(y.grad().is_none());
    }
}

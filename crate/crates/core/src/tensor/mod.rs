//! Dense tensors and the reverse-mode autodiff tape.
//!
//! A [`Tensor`] is an immutable N-dimensional value (row-major, NCHW for
//! activations). Operations live on [`Tape`]; running one both computes the
//! result eagerly and, when the tape is recording, registers a backward rule
//! so [`Tape::backward`] can later fill in gradients on parameter leaves.

mod ops;
pub mod pfat;
mod tape;

pub use ops::ReduceKind;
pub use tape::Tape;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Process-wide tensor identity; ids are monotone, so every tape node's
/// inputs have smaller ids than its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn fresh_id() -> TensorId {
    TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

struct Inner<T: Scalar> {
    id: TensorId,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
}

/// Immutable dense value. Cloning is cheap (shared storage); no operation
/// ever mutates an existing tensor's data.
pub struct Tensor<T: Scalar> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor{{id: {:?}, shape: {:?}, requires_grad: {}}}",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn new_inner(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
            }),
        }
    }

    /// Builds a tensor from row-major data. Fails unless
    /// `product(shape) == data.len()`.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if numel_of(shape) != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} holds {} elements but {} were provided",
                shape,
                numel_of(shape),
                data.len()
            )));
        }
        Ok(Self::new_inner(data, shape.to_vec(), false))
    }

    pub fn from_f64_slice(vals: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(vals.iter().map(|&v| T::from_f64(v)).collect(), shape)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::new_inner(vec![value; numel_of(shape)], shape.to_vec(), false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: T) -> Self {
        Self::new_inner(vec![value], Vec::new(), false)
    }

    /// Marks this tensor as a trainable leaf; gradients will be stored on it
    /// by [`Tape::backward`].
    pub fn into_param(self) -> Self {
        match Arc::try_unwrap(self.inner) {
            Ok(inner) => Tensor {
                inner: Arc::new(Inner {
                    requires_grad: true,
                    ..inner
                }),
            },
            Err(shared) => Self::new_inner(shared.data.clone(), shared.shape.clone(), true),
        }
    }

    pub fn id(&self) -> TensorId {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on a tensor with {} elements", self.numel());
        self.inner.data[0]
    }

    /// Value at a full multi-index (row-major).
    pub fn at(&self, idx: &[usize]) -> T {
        assert_eq!(idx.len(), self.rank());
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            assert!(i < self.inner.shape[d], "index {idx:?} out of bounds for {:?}", self.inner.shape);
            flat = flat * self.inner.shape[d] + i;
        }
        self.inner.data[flat]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Copy of the accumulated gradient, if backward has produced one.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().unwrap().clone()
    }

    /// Removes and returns the gradient, leaving the slot empty.
    pub fn take_grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().unwrap().take()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn set_grad(&self, grad: Vec<T>) -> Result<()> {
        debug_assert_eq!(grad.len(), self.numel());
        let mut slot = self.inner.grad.lock().unwrap();
        if slot.is_some() {
            return Err(Error::invalid(format!(
                "gradient already present on tensor {:?}; zero it before running backward again",
                self.inner.id
            )));
        }
        *slot = Some(grad);
        Ok(())
    }
}

//! Element types tensors can be built from.
//!
//! The whole stack is generic over [`Scalar`]: training defaults to `f32`,
//! while gradient checking and the bitwise-reproducibility mode run at `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Storage type tag as it appears in the tensor container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Byte tag written to container files (0 = f32, 1 = f64).
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Dtype> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

/// Floating-point element of a tensor. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + Sum + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one value from `bytes`, which must hold exactly `DTYPE.size_bytes()`.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 needs 4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 needs 8 bytes"))
    }
}

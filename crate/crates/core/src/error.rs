//! Error type shared by tensors, layers, data loading and training.

use std::path::PathBuf;

/// Errors surfaced by this crate.
///
/// `Numeric` is the "exit code 2" class (non-finite losses or gradients,
/// failed tolerance checks); everything else is a usage, configuration or
/// I/O problem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("depth map {path} must be a 16-bit grayscale PNG (decoded as {found})")]
    WrongBitDepth { path: PathBuf, found: String },

    #[error("rgb is {rgb_w}x{rgb_h} but depth is {depth_w}x{depth_h}")]
    SampleSizeMismatch {
        rgb_w: u32,
        rgb_h: u32,
        depth_w: u32,
        depth_h: u32,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code convention: 1 for usage/config errors, 2 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

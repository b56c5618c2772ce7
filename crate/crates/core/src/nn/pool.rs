//! Global pooling over the spatial plane, N×C×H×W → N×C×1×1.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ReduceKind, Tape, Tensor};

fn check_rank4<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<()> {
    if x.rank() != 4 {
        return Err(Error::invalid(format!(
            "{op} expects N×C×H×W, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn global_avg_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_rank4("global_avg_pool", x)?;
        self.reduce(x, ReduceKind::Mean, &[2, 3], true)
    }

    /// Max over H×W; gradient routes to the first argmax per channel.
    pub fn global_max_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_rank4("global_max_pool", x)?;
        self.reduce(x, ReduceKind::Max, &[2, 3], true)
    }
}

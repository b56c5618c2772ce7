//! Training losses and evaluation metrics, all aware of invalid pixels.

mod loss;
mod metrics;

pub use loss::{gradient_loss, scale_invariant_loss, total_loss, LossTerms, LossWeights};
pub use metrics::{aggregate_metrics, compute_metrics, MetricReport, MIN_EVAL_DEPTH};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-pixel validity map for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
    count: usize,
}

impl ValidMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::invalid(format!(
                "mask for {h}x{w} needs {} bits, got {}",
                h * w,
                bits.len()
            )));
        }
        let count = bits.iter().filter(|&&b| b).count();
        Ok(ValidMask { h, w, bits, count })
    }

    pub fn all_valid(h: usize, w: usize) -> Self {
        ValidMask {
            h,
            w,
            bits: vec![true; h * w],
            count: h * w,
        }
    }

    /// Valid wherever the stored depth is strictly positive (raw zero
    /// means "no ground truth" in depth maps).
    pub fn from_positive_depth(depth: &[f64], h: usize, w: usize) -> Result<Self> {
        if depth.len() != h * w {
            return Err(Error::invalid(format!(
                "depth for {h}x{w} needs {} values, got {}",
                h * w,
                depth.len()
            )));
        }
        Self::new(h, w, depth.iter().map(|&d| d > 0.0).collect())
    }

    /// Restriction to pixels whose ground truth lies in the metric
    /// evaluation range [`MIN_EVAL_DEPTH`, cap].
    pub fn restrict_to_range(&self, gt: &[f64], cap: f64) -> Result<Self> {
        if gt.len() != self.bits.len() {
            return Err(Error::invalid("mask/depth length mismatch"));
        }
        let bits = self
            .bits
            .iter()
            .zip(gt)
            .map(|(&b, &d)| b && d >= MIN_EVAL_DEPTH && d <= cap)
            .collect();
        Self::new(self.h, self.w, bits)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.w + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// 0/1 image for elementwise masking on the tape.
    pub fn indicator<T: Scalar>(&self) -> Vec<T> {
        self.bits
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }
}

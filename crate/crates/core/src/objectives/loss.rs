//! Depth regression losses built on the tape, so they backpropagate.
//!
//! Both losses treat invalid pixels by substitution rather than gather:
//! invalid positions in prediction and ground truth are replaced with 1.0
//! before any log or ratio, then the per-pixel terms are multiplied by a
//! 0/1 indicator. The substituted values keep every intermediate finite,
//! and the indicator kills both the value and the gradient exactly.

use super::ValidMask;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

/// Loss hyperparameters with their standard defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    /// Coefficient on the squared-mean term of the scale-invariant loss.
    pub lambda: f64,
    /// Weight on the root of the scale-invariant term.
    pub alpha: f64,
    /// Weight on the root of the gradient term.
    pub beta: f64,
    /// Pixel offsets used by the multi-scale gradient term.
    pub spacings: Vec<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.85,
            alpha: 10.0,
            beta: 2.0,
            spacings: vec![1, 2, 4, 8, 16],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("loss weights must be finite"));
        }
        if self.spacings.is_empty() {
            return Err(Error::invalid("at least one gradient spacing required"));
        }
        if self.spacings.iter().any(|&s| s == 0) {
            return Err(Error::invalid("gradient spacings must be >= 1"));
        }
        Ok(())
    }
}

/// Scalar loss tensors for one sample, still attached to the tape.
pub struct LossTerms<T: Scalar> {
    pub scale_invariant: Tensor<T>,
    pub gradient: Tensor<T>,
    pub total: Tensor<T>,
    pub valid_count: usize,
}

/// Sanitized single-plane views of a prediction/target pair.
struct Prepared<T: Scalar> {
    pred_safe: Tensor<T>,
    gt_safe: Tensor<T>,
    mask_t: Tensor<T>,
    h: usize,
    w: usize,
    count: usize,
}

/// Accepts [H, W] or [1, 1, H, W] and yields the plane dimensions.
fn plane_dims<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        [1, 1, h, w] => Ok((*h, *w)),
        other => Err(Error::invalid(format!(
            "{what} must be [H, W] or [1, 1, H, W], got {other:?}"
        ))),
    }
}

fn prepare<T: Scalar>(
    tape: &Tape<T>,
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &ValidMask,
) -> Result<Prepared<T>> {
    let (h, w) = plane_dims(pred, "prediction")?;
    let (gh, gw) = plane_dims(gt, "ground truth")?;
    if (h, w) != (gh, gw) || (h, w) != (mask.height(), mask.width()) {
        return Err(Error::invalid(format!(
            "prediction {h}x{w}, ground truth {gh}x{gw} and mask {}x{} must agree",
            mask.height(),
            mask.width()
        )));
    }
    if mask.count() == 0 {
        return Err(Error::invalid("loss needs at least one valid pixel"));
    }
    for (idx, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if mask.bits()[idx] {
            // `!(x > 0)` also catches NaN. A bad ground truth is a data
            // problem; a bad prediction means the model state degenerated
            // numerically, which callers handle differently.
            if !(g.as_f64() > 0.0) {
                return Err(Error::invalid(format!(
                    "ground truth must be strictly positive at valid pixels, got {g} at index {idx}"
                )));
            }
            if !(p.as_f64() > 0.0) {
                return Err(Error::Numeric(format!(
                    "prediction must be strictly positive at valid pixels, got {p} at index {idx}"
                )));
            }
        }
    }

    let pred_plane = if pred.rank() == 4 {
        tape.reshape(pred, &[h, w])?
    } else {
        pred.clone()
    };
    let mask_t = Tensor::from_vec(mask.indicator::<T>(), &[h, w])?;
    let inv_t = Tensor::from_vec(
        mask.bits()
            .iter()
            .map(|&b| if b { T::zero() } else { T::one() })
            .collect(),
        &[h, w],
    )?;
    let pred_safe = tape.add(&tape.mul(&pred_plane, &mask_t)?, &inv_t)?;
    // Ground truth never needs gradients, so sanitize it as plain data.
    let gt_safe = Tensor::from_vec(
        gt.data()
            .iter()
            .zip(mask.bits())
            .map(|(&g, &b)| if b { g } else { T::one() })
            .collect(),
        &[h, w],
    )?;
    Ok(Prepared {
        pred_safe,
        gt_safe,
        mask_t,
        h,
        w,
        count: mask.count(),
    })
}

/// Scale-invariant log loss: mean squared log error minus `lambda` times
/// the squared mean log error, over valid pixels only.
pub fn scale_invariant_loss<T: Scalar>(
    tape: &Tape<T>,
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &ValidMask,
    lambda: f64,
) -> Result<Tensor<T>> {
    let p = prepare(tape, pred, gt, mask)?;
    let t = p.count as f64;
    let e = tape.mul(
        &tape.sub(&tape.log(&p.pred_safe), &tape.log(&p.gt_safe))?,
        &p.mask_t,
    )?;
    let sum_sq = tape.sum_all(&tape.mul(&e, &e)?)?;
    let sum = tape.sum_all(&e)?;
    tape.sub(
        &tape.scale(&sum_sq, T::from_f64(1.0 / t)),
        &tape.scale(&tape.mul(&sum, &sum)?, T::from_f64(lambda / (t * t))),
    )
}

/// Multi-scale gradient matching loss.
///
/// For each spacing s, forward differences along rows and columns are
/// normalized by the absolute sum of the pixel pair; the per-pixel term is
/// the Euclidean norm of the 2-vector difference between prediction and
/// ground truth, counted only where the pixel and both offset pixels are
/// valid and in range. The sum over all spacings is divided by the valid
/// pixel count.
pub fn gradient_loss<T: Scalar>(
    tape: &Tape<T>,
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &ValidMask,
    spacings: &[usize],
) -> Result<Tensor<T>> {
    if spacings.is_empty() {
        return Err(Error::invalid("at least one gradient spacing required"));
    }
    let p = prepare(tape, pred, gt, mask)?;
    let (h, w) = (p.h, p.w);
    let s_max = *spacings.iter().max().expect("checked non-empty");
    if h <= s_max || w <= s_max {
        return Err(Error::invalid(format!(
            "image {h}x{w} must be larger than the max gradient spacing {s_max} in both axes"
        )));
    }

    // d[i+s,j] and d[i,j+s] both cropped to the common [h-s, w-s] window.
    let shifted = |d: &Tensor<T>, s: usize| -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let rows = tape.slice(d, 0, 0, h - s)?;
        let base = tape.slice(&rows, 1, 0, w - s)?;
        let down = tape.slice(&tape.slice(d, 0, s, h - s)?, 1, 0, w - s)?;
        let right = tape.slice(&rows, 1, s, w - s)?;
        Ok((base, down, right))
    };
    let ratio = |num_hi: &Tensor<T>, base: &Tensor<T>| -> Result<Tensor<T>> {
        tape.div(
            &tape.sub(num_hi, base)?,
            &tape.abs(&tape.add(num_hi, base)?),
        )
    };

    let mut acc: Option<Tensor<T>> = None;
    for &s in spacings {
        let (pb, pd, pr) = shifted(&p.pred_safe, s)?;
        let (gb, gd, gr) = shifted(&p.gt_safe, s)?;
        let dy = tape.sub(&ratio(&pd, &pb)?, &ratio(&gd, &gb)?)?;
        let dx = tape.sub(&ratio(&pr, &pb)?, &ratio(&gr, &gb)?)?;
        let sq = tape.add(&tape.mul(&dx, &dx)?, &tape.mul(&dy, &dy)?)?;

        let mut bits = Vec::with_capacity((h - s) * (w - s));
        for i in 0..h - s {
            for j in 0..w - s {
                bits.push(mask.get(i, j) && mask.get(i + s, j) && mask.get(i, j + s));
            }
        }
        let tri = ValidMask::new(h - s, w - s, bits)?;
        let tri_t = Tensor::from_vec(tri.indicator::<T>(), &[h - s, w - s])?;
        // Masking inside the root keeps excluded terms at exactly zero,
        // and the root's zero-gradient convention keeps them gradient-free.
        let term = tape.sum_all(&tape.sqrt(&tape.mul(&sq, &tri_t)?))?;
        acc = Some(match acc {
            Some(a) => tape.add(&a, &term)?,
            None => term,
        });
    }
    let total = acc.expect("non-empty spacings each contribute a term");
    Ok(tape.scale(&total, T::from_f64(1.0 / p.count as f64)))
}

/// Combined objective: alpha * sqrt(scale-invariant) + beta * sqrt(gradient).
pub fn total_loss<T: Scalar>(
    tape: &Tape<T>,
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &ValidMask,
    weights: &LossWeights,
) -> Result<LossTerms<T>> {
    weights.validate()?;
    let l_d = scale_invariant_loss(tape, pred, gt, mask, weights.lambda)?;
    let l_g = gradient_loss(tape, pred, gt, mask, &weights.spacings)?;
    // The variance-style difference can round a hair below zero near a
    // perfect fit; clamp before the root. Both relu and sqrt define their
    // gradient at 0 as 0, so the clamp is safe to differentiate through.
    let root_d = tape.sqrt(&tape.relu(&l_d));
    let root_g = tape.sqrt(&tape.relu(&l_g));
    let total = tape.add(
        &tape.scale(&root_d, T::from_f64(weights.alpha)),
        &tape.scale(&root_g, T::from_f64(weights.beta)),
    )?;
    Ok(LossTerms {
        scale_invariant: l_d,
        gradient: l_g,
        total,
        valid_count: mask.count(),
    })
}

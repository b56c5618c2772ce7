//! Standard depth evaluation metrics over valid pixels.
//!
//! Metrics are always computed in f64 regardless of the model dtype, so
//! reports are comparable across precisions.

use super::ValidMask;
use crate::error::{Error, Result};

/// Floor applied to predictions before evaluation. The cap comes from the
/// dataset (80 m for road scenes); the floor protects the log metrics.
pub const MIN_EVAL_DEPTH: f64 = 1e-3;

/// The five standard metrics plus the accuracy thresholds, with the pixel
/// count they were computed over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Fraction of pixels with max(pred/gt, gt/pred) < 1.25.
    pub d1: f64,
    /// Same with threshold 1.25^2.
    pub d2: f64,
    /// Same with threshold 1.25^3.
    pub d3: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Valid pixels contributing to the averages.
    pub n: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "d1,d2,d3,abs_rel,sq_rel,rmse,rmse_log,N";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.d1, self.d2, self.d3, self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.n
        )
    }

    /// Column order used by the aligned human-readable table.
    pub const TABLE_COLUMNS: [&'static str; 7] = [
        "AbsRel", "SqRel", "RMSE", "RMSElog", "d<1.25", "d<1.25^2", "d<1.25^3",
    ];

    pub fn table_values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.d1,
            self.d2,
            self.d3,
        ]
    }
}

/// Computes the metric suite for one sample.
///
/// Predictions are clamped to [`MIN_EVAL_DEPTH`, `cap`] before anything is
/// measured. Ground truth must be strictly positive at valid pixels; use
/// [`ValidMask::restrict_to_range`] first to apply the evaluation range.
pub fn compute_metrics(
    pred: &[f64],
    gt: &[f64],
    mask: &ValidMask,
    cap: f64,
) -> Result<MetricReport> {
    if !(cap.is_finite() && cap > MIN_EVAL_DEPTH) {
        return Err(Error::invalid(format!("bad evaluation depth cap {cap}")));
    }
    let expect = mask.height() * mask.width();
    if pred.len() != expect || gt.len() != expect {
        return Err(Error::invalid(format!(
            "metrics need {expect} pixels, got pred {} and gt {}",
            pred.len(),
            gt.len()
        )));
    }
    if mask.count() == 0 {
        return Err(Error::invalid("metrics need at least one valid pixel"));
    }

    let t1 = 1.25;
    let t2 = t1 * t1;
    let t3 = t2 * t1;
    let (mut c1, mut c2, mut c3) = (0usize, 0usize, 0usize);
    let (mut abs_rel, mut sq_rel, mut se, mut se_log) = (0.0, 0.0, 0.0, 0.0);
    for idx in 0..expect {
        if !mask.bits()[idx] {
            continue;
        }
        let g = gt[idx];
        if !(g > 0.0) {
            return Err(Error::invalid(format!(
                "ground truth must be positive at valid pixels, got {g} at index {idx}"
            )));
        }
        let p = pred[idx].clamp(MIN_EVAL_DEPTH, cap);
        let ratio = (p / g).max(g / p);
        if ratio < t1 {
            c1 += 1;
        }
        if ratio < t2 {
            c2 += 1;
        }
        if ratio < t3 {
            c3 += 1;
        }
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        se += diff * diff;
        se_log += (p.ln() - g.ln()).powi(2);
    }
    let n = mask.count() as f64;
    Ok(MetricReport {
        d1: c1 as f64 / n,
        d2: c2 as f64 / n,
        d3: c3 as f64 / n,
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (se / n).sqrt(),
        rmse_log: (se_log / n).sqrt(),
        n: mask.count(),
    })
}

/// Valid-pixel-weighted mean of per-sample reports.
pub fn aggregate_metrics(reports: &[MetricReport]) -> Result<MetricReport> {
    let total: usize = reports.iter().map(|r| r.n).sum();
    if total == 0 {
        return Err(Error::invalid("cannot aggregate metrics over zero valid pixels"));
    }
    let mut acc = [0.0f64; 7];
    for r in reports {
        let w = r.n as f64;
        let v = [r.d1, r.d2, r.d3, r.abs_rel, r.sq_rel, r.rmse, r.rmse_log];
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    let t = total as f64;
    Ok(MetricReport {
        d1: acc[0] / t,
        d2: acc[1] / t,
        d3: acc[2] / t,
        abs_rel: acc[3] / t,
        sq_rel: acc[4] / t,
        rmse: acc[5] / t,
        rmse_log: acc[6] / t,
        n: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_perfectly() {
        let gt = [1.0, 5.0, 20.0, 79.0];
        let mask = ValidMask::all_valid(2, 2);
        let r = compute_metrics(&gt, &gt, &mask, 80.0).unwrap();
        assert_eq!((r.d1, r.d2, r.d3), (1.0, 1.0, 1.0));
        assert_eq!(r.abs_rel, 0.0);
        assert_eq!(r.sq_rel, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.rmse_log, 0.0);
        assert_eq!(r.n, 4);
    }

    #[test]
    fn uniform_thirty_percent_overshoot() {
        // ratio 1.3 misses the first threshold (strict <) and clears the
        // other two; relative error is exactly 0.3.
        let gt = [2.0, 4.0, 10.0, 40.0];
        let pred: Vec<f64> = gt.iter().map(|g| 1.3 * g).collect();
        let mask = ValidMask::all_valid(2, 2);
        let r = compute_metrics(&pred, &gt, &mask, 80.0).unwrap();
        assert_eq!(r.d1, 0.0);
        assert_eq!(r.d2, 1.0);
        assert_eq!(r.d3, 1.0);
        assert!((r.abs_rel - 0.3).abs() < 1e-12);
    }

    #[test]
    fn clamping_applies_before_measurement() {
        let gt = [1.0];
        let mask = ValidMask::all_valid(1, 1);
        // A wild prediction is pulled down to the cap first.
        let r = compute_metrics(&[500.0], &gt, &mask, 80.0).unwrap();
        assert!((r.abs_rel - 79.0).abs() < 1e-12);
        // And a non-positive one is pulled up to the floor.
        let r = compute_metrics(&[-3.0], &gt, &mask, 80.0).unwrap();
        assert!((r.abs_rel - (1.0 - MIN_EVAL_DEPTH)).abs() < 1e-12);
    }

    #[test]
    fn invalid_pixels_are_ignored() {
        let mask = ValidMask::new(1, 3, vec![true, false, true]).unwrap();
        let r = compute_metrics(&[1.0, 99.0, 2.0], &[1.0, 0.0, 2.0], &mask, 80.0).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(r.abs_rel, 0.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mask = ValidMask::new(1, 2, vec![false, false]).unwrap();
        assert!(compute_metrics(&[1.0, 1.0], &[1.0, 1.0], &mask, 80.0).is_err());
    }

    #[test]
    fn aggregate_weights_by_pixel_count() {
        let a = MetricReport {
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            abs_rel: 0.1,
            sq_rel: 0.0,
            rmse: 1.0,
            rmse_log: 0.0,
            n: 1,
        };
        let b = MetricReport {
            d1: 0.0,
            d2: 1.0,
            d3: 1.0,
            abs_rel: 0.4,
            sq_rel: 0.0,
            rmse: 4.0,
            rmse_log: 0.0,
            n: 3,
        };
        let agg = aggregate_metrics(&[a, b]).unwrap();
        assert_eq!(agg.n, 4);
        assert!((agg.d1 - 0.25).abs() < 1e-15);
        assert!((agg.abs_rel - 0.325).abs() < 1e-15);
        assert!((agg.rmse - 3.25).abs() < 1e-15);
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let r = compute_metrics(&[1.0], &[1.0], &ValidMask::all_valid(1, 1), 80.0).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            MetricReport::CSV_HEADER.split(',').count()
        );
    }
}

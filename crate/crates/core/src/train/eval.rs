//! Checkpoint evaluation: per-sample metrics, the valid-pixel-weighted
//! aggregate, CSV/table rendering, and depth-map export.

use crate::data::{save_depth_png, save_rgb_png, Dataset, DepthSample};
use crate::error::{Error, Result};
use crate::model::PfanetModel;
use crate::objectives::{aggregate_metrics, compute_metrics, MetricReport};
use crate::scalar::Scalar;
use crate::tensor::Tape;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SampleEval {
    pub id: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub per_sample: Vec<SampleEval>,
    /// (id, reason) for every sample that could not be scored.
    pub skipped: Vec<(String, String)>,
    pub aggregate: Option<MetricReport>,
}

/// Runs the model over `samples` and scores predictions against ground
/// truth within the metric depth range. Samples whose resolution the
/// network cannot ingest are skipped, not fatal.
pub fn evaluate_samples<T: Scalar>(
    model: &PfanetModel<T>,
    samples: &[DepthSample],
    dump_dir: Option<&Path>,
) -> Result<EvalOutcome> {
    if let Some(dir) = dump_dir {
        fs::create_dir_all(dir)?;
    }
    let cap = model.config().max_depth;
    let tape = Tape::inference();
    let mut per_sample = Vec::new();
    let mut skipped = Vec::new();
    for s in samples {
        if s.height % 32 != 0 || s.width % 32 != 0 {
            skipped.push((
                s.id.clone(),
                format!("size {}x{} is not divisible by 32", s.height, s.width),
            ));
            continue;
        }
        let x = s.rgb_tensor::<T>()?;
        let pred = model.forward(&tape, &x)?;
        let pred_f64: Vec<f64> = pred.data().iter().map(|v| v.as_f64()).collect();

        if let Some(dir) = dump_dir {
            save_depth_png(
                &dir.join(format!("{}.png", s.id)),
                &pred_f64,
                s.height,
                s.width,
            )?;
            save_rgb_png(
                &dir.join(format!("{}_color.png", s.id)),
                &false_color(&pred_f64, cap),
                s.height,
                s.width,
            )?;
        }

        let mask = s.mask.restrict_to_range(&s.depth, cap)?;
        if mask.count() == 0 {
            skipped.push((s.id.clone(), "no pixels in the evaluation range".into()));
            continue;
        }
        let report = compute_metrics(&pred_f64, &s.depth, &mask, cap)?;
        per_sample.push(SampleEval {
            id: s.id.clone(),
            report,
        });
    }
    let aggregate = if per_sample.is_empty() {
        None
    } else {
        let reports: Vec<MetricReport> = per_sample.iter().map(|e| e.report).collect();
        Some(aggregate_metrics(&reports)?)
    };
    Ok(EvalOutcome {
        per_sample,
        skipped,
        aggregate,
    })
}

/// Loads every sample in `dataset` and evaluates it.
pub fn evaluate_dataset<T: Scalar>(
    model: &PfanetModel<T>,
    dataset: &Dataset,
    dump_dir: Option<&Path>,
) -> Result<EvalOutcome> {
    let samples: Vec<DepthSample> = (0..dataset.len())
        .map(|i| dataset.load(i))
        .collect::<Result<_>>()?;
    evaluate_samples(model, &samples, dump_dir)
}

/// Depth as a jet-style CHW color image, near = blue, far = red.
fn false_color(depth: &[f64], cap: f64) -> Vec<f64> {
    let n = depth.len();
    let mut rgb = vec![0.0f64; 3 * n];
    for (p, &d) in depth.iter().enumerate() {
        let t = (d / cap).clamp(0.0, 1.0);
        rgb[p] = (1.5 - 4.0 * (t - 0.75).abs()).clamp(0.0, 1.0);
        rgb[n + p] = (1.5 - 4.0 * (t - 0.5).abs()).clamp(0.0, 1.0);
        rgb[2 * n + p] = (1.5 - 4.0 * (t - 0.25).abs()).clamp(0.0, 1.0);
    }
    rgb
}

impl EvalOutcome {
    /// CSV with one row per sample plus an aggregate row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("id,{}\n", MetricReport::CSV_HEADER);
        for e in &self.per_sample {
            s.push_str(&format!("{},{}\n", e.id, e.report.csv_row()));
        }
        if let Some(agg) = &self.aggregate {
            s.push_str(&format!("aggregate,{}\n", agg.csv_row()));
        }
        s
    }

    /// Human-readable aligned table of the seven headline metrics.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, [f64; 7])> = self
            .per_sample
            .iter()
            .map(|e| (e.id.clone(), e.report.table_values()))
            .collect();
        if let Some(agg) = &self.aggregate {
            rows.push(("aggregate".into(), agg.table_values()));
        }
        let id_width = rows
            .iter()
            .map(|(id, _)| id.len())
            .chain(["sample".len()])
            .max()
            .unwrap_or(6);
        let mut s = format!("{:<id_width$}", "sample");
        for col in MetricReport::TABLE_COLUMNS {
            s.push_str(&format!(" {col:>9}"));
        }
        s.push('\n');
        for (id, vals) in rows {
            s.push_str(&format!("{id:<id_width$}"));
            for v in vals {
                s.push_str(&format!(" {v:>9.4}"));
            }
            s.push('\n');
        }
        if !self.skipped.is_empty() {
            s.push_str(&format!("skipped {} sample(s):\n", self.skipped.len()));
            for (id, why) in &self.skipped {
                s.push_str(&format!("  {id}: {why}\n"));
            }
        }
        s
    }
}

/// Single-image inference: read an RGB PNG, write the predicted depth
/// as a 16-bit PNG.
pub fn predict_png<T: Scalar>(
    model: &PfanetModel<T>,
    input: &Path,
    output: &Path,
) -> Result<()> {
    let (rgb, h, w) = crate::data::load_rgb_png(input)?;
    if h % 32 != 0 || w % 32 != 0 {
        return Err(Error::invalid(format!(
            "input size {h}x{w} must be divisible by 32"
        )));
    }
    let x = crate::tensor::Tensor::<T>::from_f64_slice(&rgb, &[1, 3, h, w])?;
    let pred = model.forward(&Tape::inference(), &x)?;
    let depth: Vec<f64> = pred.data().iter().map(|v| v.as_f64()).collect();
    save_depth_png(output, &depth, h, w)
}

//! Samples, datasets and the input pipeline.
//!
//! A dataset is a directory with `rgb/<id>.png` and `depth/<id>.png`
//! pairs plus optional newline-separated split files (`train.txt`,
//! `val.txt`). Depth maps use the 16-bit ÷256 PNG convention with 0 as
//! the invalid sentinel.

mod augment;
mod batch;
mod kitti;
mod synth;

pub use augment::{augment, AugmentConfig};
pub use batch::{epoch_batches, epoch_order};
pub use kitti::{
    load_depth_png, load_rgb_png, load_sample, save_depth_png, save_rgb_png, save_sample,
};
pub use synth::{generate_synth, SynthSceneSpec};

use crate::error::{Error, Result};
use crate::objectives::ValidMask;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::fs;
use std::path::{Path, PathBuf};

/// One RGB image with its metric depth map and validity mask.
///
/// `rgb` is CHW with 3 channels in [0,1]; `depth` is row-major meters
/// with 0 marking invalid pixels, so the mask is always derivable from
/// the depth plane alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSample {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
    pub mask: ValidMask,
}

impl DepthSample {
    /// Builds a sample, deriving the mask from positive depth.
    pub fn new(
        id: impl Into<String>,
        height: usize,
        width: usize,
        rgb: Vec<f64>,
        depth: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("sample dimensions must be positive"));
        }
        if rgb.len() != 3 * height * width {
            return Err(Error::invalid(format!(
                "rgb for {height}x{width} needs {} values, got {}",
                3 * height * width,
                rgb.len()
            )));
        }
        if let Some(v) = rgb.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("rgb value {v} outside [0,1]")));
        }
        if let Some(d) = depth.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::invalid(format!(
                "depth value {d} must be finite and non-negative"
            )));
        }
        let mask = ValidMask::from_positive_depth(&depth, height, width)?;
        Ok(DepthSample {
            id: id.into(),
            height,
            width,
            rgb,
            depth,
            mask,
        })
    }

    /// RGB as a [1, 3, H, W] network input.
    pub fn rgb_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_f64_slice(&self.rgb, &[1, 3, self.height, self.width])
    }

    /// Depth as an [H, W] plane (0 at invalid pixels).
    pub fn depth_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_f64_slice(&self.depth, &[self.height, self.width])
    }
}

/// An on-disk dataset: a root directory plus an ordered id list.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    ids: Vec<String>,
}

impl Dataset {
    /// Opens `root` using the named split file if present, otherwise
    /// falling back to a sorted scan of `rgb/`.
    pub fn open(root: impl Into<PathBuf>, split: &str) -> Result<Self> {
        let root = root.into();
        let split_path = root.join(split);
        if split_path.is_file() {
            Self::from_split(root, split)
        } else {
            Self::scan(root)
        }
    }

    /// Reads ids from a newline-separated split file under `root`.
    pub fn from_split(root: impl Into<PathBuf>, split: &str) -> Result<Self> {
        let root = root.into();
        let text = fs::read_to_string(root.join(split))?;
        let ids: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if ids.is_empty() {
            return Err(Error::invalid(format!("split file {split} lists no ids")));
        }
        Ok(Dataset { root, ids })
    }

    /// Lists every `rgb/*.png` stem in sorted order.
    pub fn scan(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let rgb_dir = root.join("rgb");
        if !rgb_dir.is_dir() {
            return Err(Error::invalid(format!(
                "dataset directory {} has no rgb/ subdirectory",
                root.display()
            )));
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&rgb_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        if ids.is_empty() {
            return Err(Error::invalid(format!(
                "no png images under {}",
                rgb_dir.display()
            )));
        }
        ids.sort();
        Ok(Dataset { root, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rgb_path(&self, id: &str) -> PathBuf {
        self.root.join("rgb").join(format!("{id}.png"))
    }

    pub fn depth_path(&self, id: &str) -> PathBuf {
        self.root.join("depth").join(format!("{id}.png"))
    }

    pub fn load(&self, index: usize) -> Result<DepthSample> {
        let id = self
            .ids
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))?;
        load_sample(&self.rgb_path(id), &self.depth_path(id), id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_mask_tracks_depth_sentinel() {
        let s = DepthSample::new("a", 1, 3, vec![0.5; 9], vec![1.0, 0.0, 2.5]).unwrap();
        assert_eq!(s.mask.bits(), &[true, false, true]);
        assert_eq!(s.mask.count(), 2);
    }

    #[test]
    fn sample_rejects_bad_lengths_and_ranges() {
        assert!(DepthSample::new("a", 1, 3, vec![0.5; 8], vec![1.0; 3]).is_err());
        assert!(DepthSample::new("a", 1, 3, vec![1.5; 9], vec![1.0; 3]).is_err());
        assert!(DepthSample::new("a", 1, 3, vec![0.5; 9], vec![-1.0; 3]).is_err());
        assert!(DepthSample::new("a", 1, 3, vec![0.5; 9], vec![f64::NAN; 3]).is_err());
    }

    #[test]
    fn tensors_have_network_layout() {
        let s = DepthSample::new("a", 2, 3, vec![0.25; 18], vec![1.0; 6]).unwrap();
        assert_eq!(s.rgb_tensor::<f64>().unwrap().shape(), &[1, 3, 2, 3]);
        assert_eq!(s.depth_tensor::<f32>().unwrap().shape(), &[2, 3]);
    }
}

//! PNG sample I/O.
//!
//! Depth maps are 16-bit grayscale PNGs storing meters × 256, with raw 0
//! meaning "no measurement". RGB images are 8-bit. Loading and saving
//! round-trip depth to within half a quantum (1/512 m).

use super::DepthSample;
use crate::error::{Error, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::fs;
use std::path::Path;

/// Raw-to-meters scale for 16-bit depth PNGs.
pub const DEPTH_PNG_SCALE: f64 = 256.0;

/// Loads a 16-bit grayscale depth PNG; returns (meters, height, width).
/// Raw 0 stays 0, which marks the pixel invalid downstream.
pub fn load_depth_png(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = image::open(path)?;
    let DynamicImage::ImageLuma16(gray) = img else {
        return Err(Error::WrongBitDepth {
            path: path.to_path_buf(),
            found: format!("{:?}", img.color()),
        });
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let depth = gray
        .into_raw()
        .into_iter()
        .map(|raw| raw as f64 / DEPTH_PNG_SCALE)
        .collect();
    Ok((depth, h, w))
}

/// Loads an 8-bit RGB PNG normalized to [0,1]; returns (CHW values,
/// height, width).
pub fn load_rgb_png(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut rgb = vec![0.0f64; 3 * h * w];
    for (p, px) in img.pixels().enumerate() {
        for c in 0..3 {
            rgb[c * h * w + p] = px.0[c] as f64 / 255.0;
        }
    }
    Ok((rgb, h, w))
}

/// Writes meters as a 16-bit depth PNG (×256, saturating).
pub fn save_depth_png(path: &Path, depth: &[f64], height: usize, width: usize) -> Result<()> {
    if depth.len() != height * width {
        return Err(Error::invalid(format!(
            "depth for {height}x{width} needs {} values, got {}",
            height * width,
            depth.len()
        )));
    }
    let raw: Vec<u16> = depth
        .iter()
        .map(|d| (d * DEPTH_PNG_SCALE).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw)
            .expect("buffer length checked above");
    img.save(path)?;
    Ok(())
}

/// Writes CHW [0,1] values as an 8-bit RGB PNG.
pub fn save_rgb_png(path: &Path, rgb: &[f64], height: usize, width: usize) -> Result<()> {
    if rgb.len() != 3 * height * width {
        return Err(Error::invalid(format!(
            "rgb for {height}x{width} needs {} values, got {}",
            3 * height * width,
            rgb.len()
        )));
    }
    let mut img: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::new(width as u32, height as u32);
    for (p, px) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (rgb[c * height * width + p] * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    img.save(path)?;
    Ok(())
}

/// Loads an rgb/depth pair into a sample, rejecting size mismatches.
pub fn load_sample(rgb_path: &Path, depth_path: &Path, id: &str) -> Result<DepthSample> {
    let (rgb, rh, rw) = load_rgb_png(rgb_path)?;
    let (depth, dh, dw) = load_depth_png(depth_path)?;
    if (rh, rw) != (dh, dw) {
        return Err(Error::SampleSizeMismatch {
            rgb_w: rw as u32,
            rgb_h: rh as u32,
            depth_w: dw as u32,
            depth_h: dh as u32,
        });
    }
    DepthSample::new(id, rh, rw, rgb, depth)
}

/// Materializes a sample under `<root>/rgb/<id>.png` and
/// `<root>/depth/<id>.png`.
pub fn save_sample(root: &Path, sample: &DepthSample) -> Result<()> {
    let rgb_dir = root.join("rgb");
    let depth_dir = root.join("depth");
    fs::create_dir_all(&rgb_dir)?;
    fs::create_dir_all(&depth_dir)?;
    save_rgb_png(
        &rgb_dir.join(format!("{}.png", sample.id)),
        &sample.rgb,
        sample.height,
        sample.width,
    )?;
    save_depth_png(
        &depth_dir.join(format!("{}.png", sample.id)),
        &sample.depth,
        sample.height,
        sample.width,
    )
}

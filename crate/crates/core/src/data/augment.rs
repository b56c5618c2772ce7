//! Training-time augmentation.
//!
//! Order: rotation, horizontal flip, photometric jitter, crop. Geometry
//! is applied identically to RGB, depth and mask; photometric jitter
//! touches RGB only. Depth resamples with nearest neighbor because
//! interpolating across occlusion boundaries would invent depths that
//! exist on neither surface.

use super::DepthSample;
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Maximum rotation magnitude in degrees.
    pub rotation_degrees: f64,
    pub hflip_prob: f64,
    /// Additive RGB offset magnitude.
    pub brightness: f64,
    /// Contrast factor deviation from 1, applied around mid-gray.
    pub contrast: f64,
    /// Per-channel gain deviation from 1.
    pub color: f64,
    pub crop_h: usize,
    pub crop_w: usize,
    /// How far the crop window may wander from center (0 = centered,
    /// 1 = anywhere in frame).
    pub crop_jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_degrees: 2.5,
            hflip_prob: 0.5,
            brightness: 0.2,
            contrast: 0.2,
            color: 0.1,
            crop_h: 64,
            crop_w: 128,
            crop_jitter: 1.0,
        }
    }
}

impl AugmentConfig {
    /// A configuration where every transform is inactive and the crop is
    /// the centered `ch`×`cw` window.
    pub fn none(ch: usize, cw: usize) -> Self {
        AugmentConfig {
            rotation_degrees: 0.0,
            hflip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            color: 0.0,
            crop_h: ch,
            crop_w: cw,
            crop_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_degrees.is_finite() && self.rotation_degrees >= 0.0) {
            return Err(Error::Config("rotation_degrees must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config("hflip_prob must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.brightness) {
            return Err(Error::Config("brightness must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.contrast) || !(0.0..1.0).contains(&self.color) {
            return Err(Error::Config(
                "contrast and color must lie in [0, 1)".into(),
            ));
        }
        if self.crop_h == 0 || self.crop_w == 0 {
            return Err(Error::Config("crop size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.crop_jitter) {
            return Err(Error::Config("crop_jitter must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Applies the configured augmentations. Random draws happen in a fixed
/// order whether or not each transform is active, so configs that differ
/// in one magnitude still consume the stream identically.
pub fn augment(sample: &DepthSample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<DepthSample> {
    cfg.validate()?;
    let (h, w) = (sample.height, sample.width);
    if cfg.crop_h > h || cfg.crop_w > w {
        return Err(Error::invalid(format!(
            "crop {}x{} larger than image {h}x{w}",
            cfg.crop_h, cfg.crop_w
        )));
    }

    let angle = rng.gen_range(-1.0..=1.0) * cfg.rotation_degrees;
    let flip = rng.gen_range(0.0..1.0) < cfg.hflip_prob;
    let delta = rng.gen_range(-1.0..=1.0) * cfg.brightness;
    let factor = 1.0 + rng.gen_range(-1.0..=1.0) * cfg.contrast;
    let gains = [
        1.0 + rng.gen_range(-1.0..=1.0) * cfg.color,
        1.0 + rng.gen_range(-1.0..=1.0) * cfg.color,
        1.0 + rng.gen_range(-1.0..=1.0) * cfg.color,
    ];
    let crop_u = rng.gen_range(0.0..1.0f64);
    let crop_v = rng.gen_range(0.0..1.0f64);

    let mut rgb = sample.rgb.clone();
    let mut depth = sample.depth.clone();

    if angle != 0.0 {
        (rgb, depth) = rotate(&rgb, &depth, h, w, angle);
    }
    if flip {
        hflip(&mut rgb, h, w, 3);
        hflip(&mut depth, h, w, 1);
    }
    if delta != 0.0 || factor != 1.0 || gains != [1.0, 1.0, 1.0] {
        for c in 0..3 {
            for v in &mut rgb[c * h * w..(c + 1) * h * w] {
                *v = (gains[c] * (factor * (*v - 0.5) + 0.5) + delta).clamp(0.0, 1.0);
            }
        }
    }

    let y0 = crop_offset(h, cfg.crop_h, cfg.crop_jitter, crop_u);
    let x0 = crop_offset(w, cfg.crop_w, cfg.crop_jitter, crop_v);
    let (ch, cw) = (cfg.crop_h, cfg.crop_w);
    let mut out_rgb = vec![0.0f64; 3 * ch * cw];
    let mut out_depth = vec![0.0f64; ch * cw];
    for i in 0..ch {
        for j in 0..cw {
            let src = (y0 + i) * w + (x0 + j);
            out_depth[i * cw + j] = depth[src];
            for c in 0..3 {
                out_rgb[c * ch * cw + i * cw + j] = rgb[c * h * w + src];
            }
        }
    }

    DepthSample::new(sample.id.clone(), ch, cw, out_rgb, out_depth)
}

/// Offset of a `crop` window inside `full`, `jitter`-scaled around the
/// centered position; `u` is a uniform [0,1) draw.
fn crop_offset(full: usize, crop: usize, jitter: f64, u: f64) -> usize {
    let max = (full - crop) as f64;
    let center = max / 2.0;
    let off = center + (u - 0.5) * jitter * max;
    (off.round() as i64).clamp(0, max as i64) as usize
}

/// Rotates by `angle` degrees about the image center. RGB is sampled
/// bilinearly with edge clamping; depth uses the nearest source pixel.
/// Pixels whose nearest source falls outside the frame become invalid
/// (depth 0, black RGB).
fn rotate(rgb: &[f64], depth: &[f64], h: usize, w: usize, angle: f64) -> (Vec<f64>, Vec<f64>) {
    let theta = angle.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out_rgb = vec![0.0f64; 3 * h * w];
    let mut out_depth = vec![0.0f64; h * w];
    for i in 0..h {
        for j in 0..w {
            let dy = i as f64 - cy;
            let dx = j as f64 - cx;
            let sy = -sin * dx + cos * dy + cy;
            let sx = cos * dx + sin * dy + cx;
            let ry = sy.round() as i64;
            let rx = sx.round() as i64;
            if ry < 0 || ry >= h as i64 || rx < 0 || rx >= w as i64 {
                continue;
            }
            let p = i * w + j;
            out_depth[p] = depth[(ry as usize) * w + rx as usize];
            let y0 = (sy.floor() as i64).clamp(0, h as i64 - 1) as usize;
            let x0 = (sx.floor() as i64).clamp(0, w as i64 - 1) as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fy = (sy - y0 as f64).clamp(0.0, 1.0);
            let fx = (sx - x0 as f64).clamp(0.0, 1.0);
            for c in 0..3 {
                let plane = &rgb[c * h * w..(c + 1) * h * w];
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out_rgb[c * h * w + p] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    (out_rgb, out_depth)
}

fn hflip(data: &mut [f64], h: usize, w: usize, channels: usize) {
    for c in 0..channels {
        for i in 0..h {
            data[c * h * w + i * w..c * h * w + (i + 1) * w].reverse();
        }
    }
}

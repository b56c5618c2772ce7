//! Deterministic synthetic depth scenes.
//!
//! Each scene is a ground plane whose depth grows strictly along image
//! rows, overpainted by rectangles and circles at random depths (closer
//! wins, so primitives occlude correctly). RGB is per-surface albedo
//! modulated by depth-correlated shading, which keeps depth recoverable
//! from RGB alone.

use super::DepthSample;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, tag};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub seed: u64,
    /// Output height; must be divisible by 32.
    pub height: usize,
    /// Output width; must be divisible by 32.
    pub width: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Nearest ground-plane depth in meters.
    pub near: f64,
    /// Farthest depth in meters; at most 80.
    pub far: f64,
    /// Fraction of pixels zeroed out as invalid.
    pub invalid_fraction: f64,
}

impl Default for SynthSceneSpec {
    fn default() -> Self {
        SynthSceneSpec {
            seed: 0,
            height: 64,
            width: 128,
            min_objects: 2,
            max_objects: 5,
            near: 2.0,
            far: 70.0,
            invalid_fraction: 0.05,
        }
    }
}

impl SynthSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 32 != 0 || self.width % 32 != 0 {
            return Err(Error::invalid(format!(
                "scene size {}x{} must be positive and divisible by 32",
                self.height, self.width
            )));
        }
        if !(self.near.is_finite() && self.far.is_finite()) || self.near <= 0.0 {
            return Err(Error::invalid("depth range must be finite and positive"));
        }
        if self.near >= self.far || self.far > 80.0 {
            return Err(Error::invalid(format!(
                "depth range [{}, {}] must be increasing and capped at 80 m",
                self.near, self.far
            )));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::invalid("object count range is inverted"));
        }
        if !(0.0..1.0).contains(&self.invalid_fraction) {
            return Err(Error::invalid("invalid_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Parses a flat `key = value` scene description on top of the
    /// defaults. `#` starts a comment; unknown or duplicate keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| {
                Error::Config(format!("{key}: cannot parse {v:?}"))
            })
        }
        let mut spec = SynthSceneSpec::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let v = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            match key {
                "seed" => spec.seed = num(key, v)?,
                "height" => spec.height = num(key, v)?,
                "width" => spec.width = num(key, v)?,
                "min_objects" => spec.min_objects = num(key, v)?,
                "max_objects" => spec.max_objects = num(key, v)?,
                "near" => spec.near = num(key, v)?,
                "far" => spec.far = num(key, v)?,
                "invalid_fraction" => spec.invalid_fraction = num(key, v)?,
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Renders the scene described by `spec`; identical specs produce
/// bitwise-identical samples.
pub fn generate_synth(spec: &SynthSceneSpec) -> Result<DepthSample> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = derive_rng(spec.seed, &[tag::SYNTH]);

    // Ground plane: depth strictly increasing with the row index.
    let mut depth = vec![0.0f64; h * w];
    for i in 0..h {
        let t = (i as f64 + 0.5) / h as f64;
        let d = spec.near + (spec.far - spec.near) * t;
        for j in 0..w {
            depth[i * w + j] = d;
        }
    }
    let ground_albedo = [
        rng.gen_range(0.35..0.85),
        rng.gen_range(0.35..0.85),
        rng.gen_range(0.35..0.85),
    ];
    let mut albedo = vec![0.0f64; 3 * h * w];
    for c in 0..3 {
        albedo[c * h * w..(c + 1) * h * w].fill(ground_albedo[c]);
    }

    // Primitives, painted only where they are closer than what is
    // already there.
    let count = rng.gen_range(spec.min_objects..=spec.max_objects);
    for _ in 0..count {
        let circle = rng.gen_bool(0.5);
        let d = rng.gen_range(spec.near..spec.near + 0.9 * (spec.far - spec.near));
        let obj_albedo = [
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.2..1.0),
        ];
        let cy = rng.gen_range(0..h) as i64;
        let cx = rng.gen_range(0..w) as i64;
        let ry = rng.gen_range(h / 8..=h / 3).max(1) as i64;
        let rx = rng.gen_range(w / 8..=w / 3).max(1) as i64;
        for i in 0..h as i64 {
            for j in 0..w as i64 {
                let inside = if circle {
                    let dy = (i - cy) as f64 / ry as f64;
                    let dx = (j - cx) as f64 / rx as f64;
                    dy * dy + dx * dx <= 1.0
                } else {
                    (i - cy).abs() <= ry && (j - cx).abs() <= rx
                };
                let p = (i as usize) * w + j as usize;
                if inside && d < depth[p] {
                    depth[p] = d;
                    for c in 0..3 {
                        albedo[c * h * w + p] = obj_albedo[c];
                    }
                }
            }
        }
    }

    // Shading: near surfaces bright, far surfaces dim.
    let mut rgb = vec![0.0f64; 3 * h * w];
    for p in 0..h * w {
        let shade = 1.0 - (depth[p] - spec.near) / (spec.far - spec.near);
        let lum = 0.25 + 0.75 * shade;
        for c in 0..3 {
            rgb[c * h * w + p] = (albedo[c * h * w + p] * lum).clamp(0.0, 1.0);
        }
    }

    // Knock out a deterministic random subset of pixels.
    let invalid = ((spec.invalid_fraction * (h * w) as f64).round() as usize).min(h * w - 1);
    if invalid > 0 {
        let mut order: Vec<usize> = (0..h * w).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &p in order.iter().take(invalid) {
            depth[p] = 0.0;
        }
    }

    DepthSample::new(format!("synth-{:016x}", spec.seed), h, w, rgb, depth)
}

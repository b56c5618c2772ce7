//! Spatial resampling on N×C×H×W tensors.
//!
//! Nearest neighbor uses the floor rule in both directions; bilinear
//! upsampling follows the align-corners=false convention (source position
//! `(dst + 0.5)/factor - 0.5`, negative positions clamped to the border).
//! Bilinear downsampling is not supported.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    Nearest,
    Bilinear,
}

/// Integer scale factor and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleFactor {
    Up(usize),
    Down(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResampleSpec {
    pub mode: ResampleMode,
    pub factor: ResampleFactor,
}

fn check_input<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 4 {
        return Err(Error::invalid(format!(
            "resample expects N×C×H×W, got {:?}",
            x.shape()
        )));
    }
    if factor == 0 {
        return Err(Error::invalid("resample factor must be >= 1"));
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]))
}

impl<T: Scalar> Tape<T> {
    pub fn resample(&self, x: &Tensor<T>, spec: ResampleSpec) -> Result<Tensor<T>> {
        match (spec.mode, spec.factor) {
            (ResampleMode::Nearest, ResampleFactor::Up(f)) => self.nearest_up(x, f),
            (ResampleMode::Nearest, ResampleFactor::Down(f)) => self.nearest_down(x, f),
            (ResampleMode::Bilinear, ResampleFactor::Up(f)) => self.bilinear_up(x, f),
            (ResampleMode::Bilinear, ResampleFactor::Down(_)) => Err(Error::invalid(
                "bilinear downsampling is not supported; use nearest",
            )),
        }
    }

    /// Gather along a per-output spatial map; shared by both nearest
    /// directions. `map[o]` is the source plane offset for output cell `o`.
    fn spatial_gather(
        &self,
        x: &Tensor<T>,
        out_h: usize,
        out_w: usize,
        map: Vec<usize>,
    ) -> Result<Tensor<T>> {
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (in_plane, out_plane) = (h * w, out_h * out_w);
        let xd = x.data();
        let mut data = vec![T::zero(); n * c * out_plane];
        for plane in 0..n * c {
            let src = &xd[plane * in_plane..(plane + 1) * in_plane];
            let dst = &mut data[plane * out_plane..(plane + 1) * out_plane];
            for (o, &s) in map.iter().enumerate() {
                dst[o] = src[s];
            }
        }
        let out = Tensor::from_vec(data, &[n, c, out_h, out_w])?;
        let in_numel = x.numel();
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![wants[0].then(|| {
                    let mut g = vec![T::zero(); in_numel];
                    for plane in 0..n * c {
                        let src = &up[plane * out_plane..(plane + 1) * out_plane];
                        let dst = &mut g[plane * in_plane..(plane + 1) * in_plane];
                        for (o, &s) in map.iter().enumerate() {
                            dst[s] = dst[s] + src[o];
                        }
                    }
                    g
                })]
            }),
        );
        Ok(out)
    }

    /// Repeats each pixel into an f×f block.
    pub fn nearest_up(&self, x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
        let (_, _, h, w) = check_input(x, factor)?;
        let (out_h, out_w) = (h * factor, w * factor);
        let mut map = Vec::with_capacity(out_h * out_w);
        for oy in 0..out_h {
            for ox in 0..out_w {
                map.push((oy / factor) * w + ox / factor);
            }
        }
        self.spatial_gather(x, out_h, out_w, map)
    }

    /// Keeps the top-left pixel of each f×f block; extents must divide.
    pub fn nearest_down(&self, x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
        let (_, _, h, w) = check_input(x, factor)?;
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::invalid(format!(
                "nearest downsample by {factor} needs divisible extents, got {h}x{w}"
            )));
        }
        let (out_h, out_w) = (h / factor, w / factor);
        let mut map = Vec::with_capacity(out_h * out_w);
        for oy in 0..out_h {
            for ox in 0..out_w {
                map.push(oy * factor * w + ox * factor);
            }
        }
        self.spatial_gather(x, out_h, out_w, map)
    }

    pub fn bilinear_up(&self, x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
        let (n, c, h, w) = check_input(x, factor)?;
        let (out_h, out_w) = (h * factor, w * factor);

        // (lo index, hi index, hi weight) per output coordinate
        let axis_taps = |in_len: usize, out_len: usize| -> Vec<(usize, usize, f64)> {
            (0..out_len)
                .map(|o| {
                    let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
                    let lo = src.floor() as usize;
                    let hi = (lo + 1).min(in_len - 1);
                    (lo, hi, src - lo as f64)
                })
                .collect()
        };
        let ytaps = axis_taps(h, out_h);
        let xtaps = axis_taps(w, out_w);

        let (in_plane, out_plane) = (h * w, out_h * out_w);
        let xd = x.data();
        let mut data = vec![T::zero(); n * c * out_plane];
        for plane in 0..n * c {
            let src = &xd[plane * in_plane..(plane + 1) * in_plane];
            let dst = &mut data[plane * out_plane..(plane + 1) * out_plane];
            for (oy, &(y0, y1, wy)) in ytaps.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in xtaps.iter().enumerate() {
                    let v = src[y0 * w + x0].as_f64() * (1.0 - wy) * (1.0 - wx)
                        + src[y0 * w + x1].as_f64() * (1.0 - wy) * wx
                        + src[y1 * w + x0].as_f64() * wy * (1.0 - wx)
                        + src[y1 * w + x1].as_f64() * wy * wx;
                    dst[oy * out_w + ox] = T::from_f64(v);
                }
            }
        }
        let out = Tensor::from_vec(data, &[n, c, out_h, out_w])?;
        let in_numel = x.numel();
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![wants[0].then(|| {
                    let mut g = vec![T::zero(); in_numel];
                    for plane in 0..n * c {
                        let src = &up[plane * out_plane..(plane + 1) * out_plane];
                        let dst = &mut g[plane * in_plane..(plane + 1) * in_plane];
                        for (oy, &(y0, y1, wy)) in ytaps.iter().enumerate() {
                            for (ox, &(x0, x1, wx)) in xtaps.iter().enumerate() {
                                let u = src[oy * out_w + ox];
                                dst[y0 * w + x0] =
                                    dst[y0 * w + x0] + u * T::from_f64((1.0 - wy) * (1.0 - wx));
                                dst[y0 * w + x1] =
                                    dst[y0 * w + x1] + u * T::from_f64((1.0 - wy) * wx);
                                dst[y1 * w + x0] =
                                    dst[y1 * w + x0] + u * T::from_f64(wy * (1.0 - wx));
                                dst[y1 * w + x1] = dst[y1 * w + x1] + u * T::from_f64(wy * wx);
                            }
                        }
                    }
                    g
                })]
            }),
        );
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(vals: &[f64], h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_f64_slice(vals, &[1, 1, h, w]).unwrap()
    }

    #[test]
    fn nearest_up_repeats_blocks() {
        let tape = Tape::<f64>::new();
        let x = plane(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let y = tape.nearest_up(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(
            y.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn nearest_down_inverts_nearest_up() {
        let tape = Tape::<f64>::new();
        let x = plane(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let y = tape.nearest_up(&x, 2).unwrap();
        let back = tape.nearest_down(&y, 2).unwrap();
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn nearest_down_requires_divisible_extents() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::ones(&[1, 1, 5, 4]);
        assert!(tape.nearest_down(&x, 2).is_err());
    }

    #[test]
    fn bilinear_up_matches_interpolation_oracle() {
        let tape = Tape::<f64>::new();
        let x = plane(&[0.0, 2.0, 2.0, 4.0], 2, 2);
        let y = tape.bilinear_up(&x, 2).unwrap();
        let expect = [
            0.0, 0.5, 1.5, 2.0, //
            0.5, 1.0, 2.0, 2.5, //
            1.5, 2.0, 3.0, 3.5, //
            2.0, 2.5, 3.5, 4.0,
        ];
        for (got, want) in y.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn bilinear_down_is_rejected() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::ones(&[1, 1, 4, 4]);
        let spec = ResampleSpec {
            mode: ResampleMode::Bilinear,
            factor: ResampleFactor::Down(2),
        };
        assert!(tape.resample(&x, spec).is_err());
    }

    #[test]
    fn nearest_up_gradient_sums_each_block() {
        let tape = Tape::<f64>::new();
        let x = plane(&[1.0, 2.0, 3.0, 4.0], 2, 2).into_param();
        let y = tape.nearest_up(&x, 2).unwrap();
        let loss = tape.sum_all(&y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0; 4]);
    }

    #[test]
    fn bilinear_up_gradient_conserves_mass() {
        // Interpolation weights per output pixel sum to 1, so the gradient
        // of sum(output) puts total mass out_h*out_w onto the input.
        let tape = Tape::<f64>::new();
        let x = plane(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3).into_param();
        let y = tape.bilinear_up(&x, 2).unwrap();
        let loss = tape.sum_all(&y).unwrap();
        tape.backward(&loss).unwrap();
        let total: f64 = x.grad().unwrap().iter().sum();
        assert!((total - 24.0).abs() < 1e-12);
    }
}

//! 2-D convolution (cross-correlation, no kernel flip) with dilation and
//! stride, plus its exact backward pass.
//!
//! Forward lowers each sample to an im2col matrix and multiplies with the
//! flattened kernel; backward recomputes the column matrix rather than
//! caching it, trading FLOPs for a flat memory profile across deep graphs.
//! All GEMM loops run in a fixed order, so results are bitwise reproducible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

/// Zero-padding that keeps stride-1 output the same size as the input.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    (dilation * (kernel - 1)) / 2
}

fn effective_kernel(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) + 1
}

/// Output extent for one spatial axis.
fn out_extent(input: usize, kernel: usize, stride: usize, dilation: usize, pad: usize) -> usize {
    let eff = effective_kernel(kernel, dilation);
    (input + 2 * pad).saturating_sub(eff) / stride + 1
}

/// c[m×n] = a[m×k] · b[k×n]
fn gemm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

/// c[m×n] = aᵀ · b where a is [k×m], b is [k×n]
fn gemm_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(c.len(), m * n);
    for l in 0..k {
        let arow = &a[l * m..(l + 1) * m];
        let brow = &b[l * n..(l + 1) * n];
        for i in 0..m {
            let av = arow[i];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

/// c[m×n] = a · bᵀ where a is [m×k], b is [n×k]
fn gemm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for l in 0..k {
                acc = acc + arow[l] * brow[l];
            }
            c[i * n + j] = c[i * n + j] + acc;
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    in_c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one sample's C×H×W block into a [C·K·K × outH·outW] matrix;
/// out-of-frame taps read as zero.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    debug_assert_eq!(cols.len(), g.patch_len() * g.out_len());
    let out_len = g.out_len();
    let mut row = 0usize;
    for c in 0..g.in_c {
        let chan = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dy = (ky * g.dilation) as isize - g.pad as isize;
                let dx = (kx * g.dilation) as isize - g.pad as isize;
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride) as isize + dy;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src_row = iy as usize * g.w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride) as isize + dx;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        dst[oy * g.out_w + ox] = chan[src_row + ix as usize];
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a column matrix back onto the image.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, x_grad: &mut [T]) {
    debug_assert_eq!(cols.len(), g.patch_len() * g.out_len());
    let out_len = g.out_len();
    let mut row = 0usize;
    for c in 0..g.in_c {
        let chan_start = c * g.h * g.w;
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dy = (ky * g.dilation) as isize - g.pad as isize;
                let dx = (kx * g.dilation) as isize - g.pad as isize;
                let src = &cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride) as isize + dy;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = chan_start + iy as usize * g.w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride) as isize + dx;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        x_grad[dst_row + ix as usize] =
                            x_grad[dst_row + ix as usize] + src[oy * g.out_w + ox];
                    }
                }
                row += 1;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlates `x` (N×C×H×W) with `weight` (OC×C×K×K), adds
    /// `bias` (OC), with "same" zero padding derived from the dilation.
    pub fn conv2d(
        &self,
        x: &Tensor<T>,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        dilation: usize,
    ) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::invalid(format!(
                "conv2d input must be N×C×H×W, got {:?}",
                x.shape()
            )));
        }
        if weight.rank() != 4 || weight.shape()[2] != weight.shape()[3] {
            return Err(Error::invalid(format!(
                "conv2d weight must be OC×IC×K×K, got {:?}",
                weight.shape()
            )));
        }
        let (n, in_c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (out_c, w_in_c, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
        if w_in_c != in_c {
            return Err(Error::shape("conv2d channels", x.shape(), weight.shape()));
        }
        if !(k == 1 || k == 3) {
            return Err(Error::invalid(format!("conv2d kernel must be 1 or 3, got {k}")));
        }
        if bias.shape() != [out_c] {
            return Err(Error::shape("conv2d bias", &[out_c], bias.shape()));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::invalid("conv2d stride and dilation must be >= 1"));
        }
        let pad = same_padding(k, dilation);
        let g = ConvGeom {
            in_c,
            h,
            w,
            k,
            stride,
            dilation,
            pad,
            out_h: out_extent(h, k, stride, dilation, pad),
            out_w: out_extent(w, k, stride, dilation, pad),
        };
        if g.out_h == 0 || g.out_w == 0 {
            return Err(Error::invalid(format!(
                "conv2d with kernel {k}, dilation {dilation} produces empty output for {h}x{w}"
            )));
        }

        let patch = g.patch_len();
        let out_len = g.out_len();
        let (wd, bd, xd) = (weight.data(), bias.data(), x.data());
        let mut out = vec![T::zero(); n * out_c * out_len];
        let mut cols = vec![T::zero(); patch * out_len];
        for s in 0..n {
            cols.iter_mut().for_each(|v| *v = T::zero());
            im2col(&xd[s * in_c * h * w..(s + 1) * in_c * h * w], &g, &mut cols);
            let sample_out = &mut out[s * out_c * out_len..(s + 1) * out_c * out_len];
            gemm_nn(wd, &cols, out_c, patch, out_len, sample_out);
            for oc in 0..out_c {
                let b = bd[oc];
                for v in &mut sample_out[oc * out_len..(oc + 1) * out_len] {
                    *v = *v + b;
                }
            }
        }
        let out = Tensor::from_vec(out, &[n, out_c, g.out_h, g.out_w])?;

        let (xc, wc) = (x.clone(), weight.clone());
        self.record(
            &[x.clone(), weight.clone(), bias.clone()],
            &out,
            Box::new(move |up, wants| {
                let wd = wc.data();
                let xd = xc.data();
                let mut dx = wants[0].then(|| vec![T::zero(); xc.numel()]);
                let mut dw = wants[1].then(|| vec![T::zero(); wc.numel()]);
                let mut dbias = wants[2].then(|| vec![T::zero(); out_c]);
                let mut cols = vec![T::zero(); patch * out_len];
                let mut dcols = vec![T::zero(); patch * out_len];
                for s in 0..n {
                    let d_out = &up[s * out_c * out_len..(s + 1) * out_c * out_len];
                    if dw.is_some() || dx.is_some() {
                        if let Some(dw) = dw.as_deref_mut() {
                            cols.iter_mut().for_each(|v| *v = T::zero());
                            im2col(&xd[s * in_c * h * w..(s + 1) * in_c * h * w], &g, &mut cols);
                            gemm_nt(d_out, &cols, out_c, out_len, patch, dw);
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            dcols.iter_mut().for_each(|v| *v = T::zero());
                            gemm_tn(wd, d_out, out_c, patch, out_len, &mut dcols);
                            col2im(&dcols, &g, &mut dx[s * in_c * h * w..(s + 1) * in_c * h * w]);
                        }
                    }
                    if let Some(db) = dbias.as_deref_mut() {
                        for oc in 0..out_c {
                            let mut acc = T::zero();
                            for &v in &d_out[oc * out_len..(oc + 1) * out_len] {
                                acc = acc + v;
                            }
                            db[oc] = db[oc] + acc;
                        }
                    }
                }
                vec![dx, dw, dbias]
            }),
        );
        Ok(out)
    }
}

/// Convolution layer owning its parameters.
#[derive(Clone)]
pub struct Conv2dLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    stride: usize,
    dilation: usize,
}

impl<T: Scalar> Conv2dLayer<T> {
    /// Random init: weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = in_c * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<T> = (0..out_c * in_c * kernel * kernel)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        let weight = Tensor::from_vec(data, &[out_c, in_c, kernel, kernel])?;
        Self::from_tensors(weight, Tensor::zeros(&[out_c]), stride, dilation)
    }

    /// All-zero parameters, for tests that force analytic outputs.
    pub fn zeroed(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        Self::from_tensors(
            Tensor::zeros(&[out_c, in_c, kernel, kernel]),
            Tensor::zeros(&[out_c]),
            stride,
            dilation,
        )
    }

    pub fn from_tensors(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        if weight.rank() != 4 || weight.shape()[2] != weight.shape()[3] {
            return Err(Error::invalid(format!(
                "conv weight must be OC×IC×K×K, got {:?}",
                weight.shape()
            )));
        }
        let k = weight.shape()[2];
        if !(k == 1 || k == 3) {
            return Err(Error::invalid(format!("conv kernel must be 1 or 3, got {k}")));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("conv bias", &[weight.shape()[0]], bias.shape()));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::invalid("conv stride and dilation must be >= 1"));
        }
        Ok(Conv2dLayer {
            weight: weight.into_param(),
            bias: bias.into_param(),
            stride,
            dilation,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        tape.conv2d(x, &self.weight, &self.bias, self.stride, self.dilation)
    }

    pub fn num_params(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

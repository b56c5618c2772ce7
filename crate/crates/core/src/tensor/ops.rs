//! Elementwise, reduction, and shape primitives recorded on the tape.
//!
//! Binary ops support a restricted broadcast: shapes must have equal rank
//! and every dim of `b` is either equal to `a`'s or 1 (e.g. a channel gate
//! of shape N×C×1×1 applied to an N×C×H×W activation). Gradients flowing
//! into a broadcast operand are sum-reduced over the broadcast dims.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel_of, Tape, Tensor};

/// Reduction flavor for [`Tape::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    /// Ties route the gradient to the lowest flat index.
    Max,
}

/// True when `b` may broadcast onto `a` (equal rank, dims equal or 1).
fn broadcast_ok(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&ad, &bd)| bd == ad || bd == 1)
}

/// Calls `f(a_flat, b_flat)` for every output position of a broadcast pair,
/// in row-major order of `a`.
fn for_each_pair(a_shape: &[usize], b_shape: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = a_shape.len();
    let total = numel_of(a_shape);
    if rank == 0 {
        f(0, 0);
        return;
    }
    let mut b_strides = vec![0usize; rank];
    let mut stride = 1;
    for d in (0..rank).rev() {
        b_strides[d] = if b_shape[d] == 1 { 0 } else { stride };
        stride *= b_shape[d];
    }
    let mut idx = vec![0usize; rank];
    let mut bi = 0usize;
    for ai in 0..total {
        f(ai, bi);
        for d in (0..rank).rev() {
            idx[d] += 1;
            bi += b_strides[d];
            if idx[d] < a_shape[d] {
                break;
            }
            idx[d] = 0;
            bi -= b_strides[d] * a_shape[d];
        }
    }
}

fn binary_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        return ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
    }
    let mut out = vec![T::zero(); a.numel()];
    for_each_pair(a.shape(), b.shape(), |ai, bi| out[ai] = f(ad[ai], bd[bi]));
    out
}

/// Sum-reduces an `a`-shaped gradient onto `b`'s shape, weighting each
/// contribution by `w(a_flat, b_flat)`.
fn reduce_to_b<T: Scalar>(
    a_shape: &[usize],
    b_shape: &[usize],
    upstream: &[T],
    w: impl Fn(usize, usize) -> T,
) -> Vec<T> {
    let mut acc = vec![T::zero(); numel_of(b_shape)];
    for_each_pair(a_shape, b_shape, |ai, bi| {
        acc[bi] = acc[bi] + upstream[ai] * w(ai, bi);
    });
    acc
}

impl<T: Scalar> Tape<T> {
    fn check_broadcast(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
        if !broadcast_ok(a.shape(), b.shape()) {
            return Err(Error::shape(op, a.shape(), b.shape()));
        }
        Ok(())
    }

    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check_broadcast("add", a, b)?;
        let out = Tensor::from_vec(binary_forward(a, b, |x, y| x + y), a.shape())?;
        let (a_shape, b_shape) = (a.shape().to_vec(), b.shape().to_vec());
        self.record(
            &[a.clone(), b.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![
                    wants[0].then(|| up.to_vec()),
                    wants[1].then(|| reduce_to_b(&a_shape, &b_shape, up, |_, _| T::one())),
                ]
            }),
        );
        Ok(out)
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check_broadcast("sub", a, b)?;
        let out = Tensor::from_vec(binary_forward(a, b, |x, y| x - y), a.shape())?;
        let (a_shape, b_shape) = (a.shape().to_vec(), b.shape().to_vec());
        self.record(
            &[a.clone(), b.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![
                    wants[0].then(|| up.to_vec()),
                    wants[1].then(|| {
                        reduce_to_b(&a_shape, &b_shape, up, |_, _| T::one())
                            .into_iter()
                            .map(|g| -g)
                            .collect()
                    }),
                ]
            }),
        );
        Ok(out)
    }

    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check_broadcast("mul", a, b)?;
        let out = Tensor::from_vec(binary_forward(a, b, |x, y| x * y), a.shape())?;
        let (ac, bc) = (a.clone(), b.clone());
        self.record(
            &[a.clone(), b.clone()],
            &out,
            Box::new(move |up, wants| {
                let da = wants[0].then(|| {
                    let bd = bc.data();
                    if ac.shape() == bc.shape() {
                        up.iter().zip(bd).map(|(&u, &y)| u * y).collect()
                    } else {
                        let mut g = vec![T::zero(); ac.numel()];
                        for_each_pair(ac.shape(), bc.shape(), |ai, bi| g[ai] = up[ai] * bd[bi]);
                        g
                    }
                });
                let db = wants[1].then(|| {
                    let ad = ac.data();
                    reduce_to_b(ac.shape(), bc.shape(), up, |ai, _| ad[ai])
                });
                vec![da, db]
            }),
        );
        Ok(out)
    }

    pub fn div(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check_broadcast("div", a, b)?;
        let out = Tensor::from_vec(binary_forward(a, b, |x, y| x / y), a.shape())?;
        let (ac, bc) = (a.clone(), b.clone());
        self.record(
            &[a.clone(), b.clone()],
            &out,
            Box::new(move |up, wants| {
                let bd = bc.data();
                let da = wants[0].then(|| {
                    if ac.shape() == bc.shape() {
                        up.iter().zip(bd).map(|(&u, &y)| u / y).collect()
                    } else {
                        let mut g = vec![T::zero(); ac.numel()];
                        for_each_pair(ac.shape(), bc.shape(), |ai, bi| g[ai] = up[ai] / bd[bi]);
                        g
                    }
                });
                let db = wants[1].then(|| {
                    let ad = ac.data();
                    reduce_to_b(ac.shape(), bc.shape(), up, |ai, bi| {
                        -ad[ai] / (bd[bi] * bd[bi])
                    })
                });
                vec![da, db]
            }),
        );
        Ok(out)
    }

    /// Shared unary plumbing: `f` computes the value, `df(x, y)` the local
    /// derivative given input and output.
    pub(crate) fn unary(
        &self,
        x: &Tensor<T>,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Tensor<T> {
        let data: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_vec(data, x.shape()).expect("unary preserves shape");
        let (xc, yc) = (x.clone(), out.clone());
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![wants[0].then(|| {
                    let (xd, yd) = (xc.data(), yc.data());
                    up.iter()
                        .enumerate()
                        .map(|(i, &u)| u * df(xd[i], yd[i]))
                        .collect()
                })]
            }),
        );
        out
    }

    pub fn relu(&self, x: &Tensor<T>) -> Tensor<T> {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |v, _| if v > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self, x: &Tensor<T>) -> Tensor<T> {
        self.unary(
            x,
            |v| T::one() / (T::one() + (-v).exp()),
            |_, s| s * (T::one() - s),
        )
    }

    pub fn log(&self, x: &Tensor<T>) -> Tensor<T> {
        self.unary(x, |v| v.ln(), |v, _| T::one() / v)
    }

    /// Elementwise square root; the derivative at exactly zero is defined
    /// as zero so masked-out terms cannot poison gradients.
    pub fn sqrt(&self, x: &Tensor<T>) -> Tensor<T> {
        self.unary(
            x,
            |v| v.sqrt(),
            |_, y| {
                if y == T::zero() {
                    T::zero()
                } else {
                    T::one() / (y + y)
                }
            },
        )
    }

    /// Elementwise absolute value; subgradient at zero is zero.
    pub fn abs(&self, x: &Tensor<T>) -> Tensor<T> {
        self.unary(
            x,
            |v| v.abs(),
            |v, _| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// `mul_c * x + add_c` with compile-time constants (not differentiated
    /// through the constants).
    pub fn affine(&self, x: &Tensor<T>, mul_c: T, add_c: T) -> Tensor<T> {
        self.unary(x, move |v| mul_c * v + add_c, move |_, _| mul_c)
    }

    pub fn scale(&self, x: &Tensor<T>, c: T) -> Tensor<T> {
        self.affine(x, c, T::zero())
    }

    pub fn reduce(
        &self,
        x: &Tensor<T>,
        kind: ReduceKind,
        axes: &[usize],
        keep_dims: bool,
    ) -> Result<Tensor<T>> {
        if axes.is_empty() {
            return Err(Error::invalid("reduce needs at least one axis"));
        }
        let rank = x.rank();
        let mut reduced = vec![false; rank];
        for &ax in axes {
            if ax >= rank {
                return Err(Error::invalid(format!(
                    "reduce axis {ax} out of range for rank {rank}"
                )));
            }
            if reduced[ax] {
                return Err(Error::invalid(format!("reduce axis {ax} repeated")));
            }
            reduced[ax] = true;
        }

        let in_shape = x.shape().to_vec();
        let mut out_shape = Vec::new();
        for d in 0..rank {
            if reduced[d] {
                if keep_dims {
                    out_shape.push(1);
                }
            } else {
                out_shape.push(in_shape[d]);
            }
        }
        let out_numel = numel_of(&out_shape);
        let group: usize = (0..rank)
            .filter(|&d| reduced[d])
            .map(|d| in_shape[d])
            .product();
        if group == 0 {
            return Err(Error::invalid("reduce over an empty extent"));
        }

        // Map each input flat index to its output cell once; reused by the
        // backward pass. Kept dims contribute extent 1, so skipping reduced
        // dims yields the correct flat cell either way.
        let mut cell_of = vec![0usize; x.numel()];
        {
            let mut idx = vec![0usize; rank];
            for cell in cell_of.iter_mut() {
                let mut c = 0usize;
                for d in 0..rank {
                    if !reduced[d] {
                        c = c * in_shape[d] + idx[d];
                    }
                }
                *cell = c;
                for d in (0..rank).rev() {
                    idx[d] += 1;
                    if idx[d] < in_shape[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        }

        let xd = x.data();
        let (out_data, argmax): (Vec<T>, Option<Vec<usize>>) = match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                let mut acc = vec![T::zero(); out_numel];
                for (flat, &c) in cell_of.iter().enumerate() {
                    acc[c] = acc[c] + xd[flat];
                }
                if kind == ReduceKind::Mean {
                    let inv = T::one() / T::from_f64(group as f64);
                    for v in &mut acc {
                        *v = *v * inv;
                    }
                }
                (acc, None)
            }
            ReduceKind::Max => {
                let mut best = vec![T::neg_infinity(); out_numel];
                let mut arg = vec![usize::MAX; out_numel];
                for (flat, &c) in cell_of.iter().enumerate() {
                    if arg[c] == usize::MAX || xd[flat] > best[c] {
                        best[c] = xd[flat];
                        arg[c] = flat;
                    }
                }
                (best, Some(arg))
            }
        };

        let out = Tensor::from_vec(out_data, &out_shape)?;
        let in_numel = x.numel();
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![wants[0].then(|| match (&kind, &argmax) {
                    (ReduceKind::Max, Some(arg)) => {
                        let mut g = vec![T::zero(); in_numel];
                        for (c, &flat) in arg.iter().enumerate() {
                            g[flat] = up[c];
                        }
                        g
                    }
                    _ => {
                        let scale = if kind == ReduceKind::Mean {
                            T::one() / T::from_f64(group as f64)
                        } else {
                            T::one()
                        };
                        cell_of.iter().map(|&c| up[c] * scale).collect()
                    }
                })]
            }),
        );
        Ok(out)
    }

    /// Sum of all elements as a rank-0 tensor (the usual loss root).
    pub fn sum_all(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let total: T = x.data().iter().copied().sum();
        let out = Tensor::from_vec(vec![total], &[])?;
        let n = x.numel();
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| vec![wants[0].then(|| vec![up[0]; n])]),
        );
        Ok(out)
    }

    pub fn mean_all(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.numel();
        if n == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = self.sum_all(x)?;
        Ok(self.scale(&s, T::one() / T::from_f64(n as f64)))
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&self, x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
        if numel_of(shape) != x.numel() {
            return Err(Error::shape("reshape", x.shape(), shape));
        }
        let out = Tensor::from_vec(x.data().to_vec(), shape)?;
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| vec![wants[0].then(|| up.to_vec())]),
        );
        Ok(out)
    }

    pub fn concat(&self, parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let rank = parts[0].rank();
        if axis >= rank {
            return Err(Error::invalid(format!(
                "concat axis {axis} out of range for rank {rank}"
            )));
        }
        let mut axis_total = 0usize;
        for p in parts {
            if p.rank() != rank {
                return Err(Error::shape("concat", parts[0].shape(), p.shape()));
            }
            for d in 0..rank {
                if d != axis && p.shape()[d] != parts[0].shape()[d] {
                    return Err(Error::shape("concat", parts[0].shape(), p.shape()));
                }
            }
            axis_total += p.shape()[axis];
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = axis_total;

        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![T::zero(); numel_of(&out_shape)];
        let out_row = axis_total * inner;
        let mut offset = 0usize;
        for p in parts {
            let p_axis = p.shape()[axis];
            let p_row = p_axis * inner;
            let pd = p.data();
            for o in 0..outer {
                let src = &pd[o * p_row..(o + 1) * p_row];
                let dst_start = o * out_row + offset * inner;
                data[dst_start..dst_start + p_row].copy_from_slice(src);
            }
            offset += p_axis;
        }

        let out = Tensor::from_vec(data, &out_shape)?;
        let part_axes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let part_numels: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        let inputs: Vec<Tensor<T>> = parts.iter().map(|&p| p.clone()).collect();
        self.record(
            &inputs,
            &out,
            Box::new(move |up, wants| {
                let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(part_axes.len());
                let mut offset = 0usize;
                for (k, &p_axis) in part_axes.iter().enumerate() {
                    let p_row = p_axis * inner;
                    if wants[k] {
                        let mut g = vec![T::zero(); part_numels[k]];
                        for o in 0..outer {
                            let src_start = o * out_row + offset * inner;
                            g[o * p_row..(o + 1) * p_row]
                                .copy_from_slice(&up[src_start..src_start + p_row]);
                        }
                        grads.push(Some(g));
                    } else {
                        grads.push(None);
                    }
                    offset += p_axis;
                }
                grads
            }),
        );
        Ok(out)
    }

    /// Contiguous `[start, start+len)` window along one axis.
    pub fn slice(&self, x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let rank = x.rank();
        if axis >= rank {
            return Err(Error::invalid(format!(
                "slice axis {axis} out of range for rank {rank}"
            )));
        }
        let dim = x.shape()[axis];
        if len == 0 || start + len > dim {
            return Err(Error::invalid(format!(
                "slice [{start}, {}) exceeds axis extent {dim}",
                start + len
            )));
        }
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = len;
        let outer: usize = x.shape()[..axis].iter().product();
        let inner: usize = x.shape()[axis + 1..].iter().product();
        let in_row = dim * inner;
        let out_row = len * inner;
        let xd = x.data();
        let mut data = vec![T::zero(); numel_of(&out_shape)];
        for o in 0..outer {
            let src_start = o * in_row + start * inner;
            data[o * out_row..(o + 1) * out_row]
                .copy_from_slice(&xd[src_start..src_start + out_row]);
        }
        let out = Tensor::from_vec(data, &out_shape)?;
        let in_numel = x.numel();
        self.record(
            &[x.clone()],
            &out,
            Box::new(move |up, wants| {
                vec![wants[0].then(|| {
                    let mut g = vec![T::zero(); in_numel];
                    for o in 0..outer {
                        let dst_start = o * in_row + start * inner;
                        g[dst_start..dst_start + out_row]
                            .copy_from_slice(&up[o * out_row..(o + 1) * out_row]);
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

    fn param(vals: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_f64_slice(vals, shape).unwrap().into_param()
    }

    #[test]
    fn add_is_elementwise() {
        let tape = Tape::<f64>::new();
        let a = Tensor::from_f64_slice(&[1.0, 2.0], &[2]).unwrap();
        let b = Tensor::from_f64_slice(&[3.0, 4.0], &[2]).unwrap();
        assert_eq!(tape.add(&a, &b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[0.5, -2.0, 7.0], &[3]).unwrap();
        let ones = Tensor::ones(&[3]);
        assert_eq!(tape.mul(&x, &ones).unwrap().data(), x.data());
    }

    #[test]
    fn mismatched_shapes_name_both_sides() {
        let tape = Tape::<f64>::new();
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 2]);
        let err = tape.add(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn channel_broadcast_mul_and_backward_reduction() {
        // a: 2x2x2 ones, b: 2x1x1 = [10, 100]; channel 0 scales by 10,
        // channel 1 by 100; b's gradient sums the 4 spatial positions.
        let tape = Tape::<f64>::new();
        let a = param(&[1.0; 8], &[2, 2, 2]);
        let b = param(&[10.0, 100.0], &[2, 1, 1]);
        let y = tape.mul(&a, &b).unwrap();
        assert_eq!(
            y.data(),
            &[10.0, 10.0, 10.0, 10.0, 100.0, 100.0, 100.0, 100.0]
        );
        let loss = tape.sum_all(&y).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0]);
        assert_eq!(a.grad().unwrap()[..4], [10.0; 4]);
        assert_eq!(a.grad().unwrap()[4..], [100.0; 4]);
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[-1.0, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(tape.relu(&x).data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::from_f64_slice(&[0.0, 1.5], &[2]).unwrap();
        let s = tape.sigmoid(&z);
        assert_eq!(s.data()[0], 0.5);
        assert!((s.data()[1] - 0.8175744761936437).abs() < 1e-15);
    }

    #[test]
    fn mean_over_all_axes() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_f64_slice(&[1.0, 3.0, 5.0, 7.0], &[2, 2]).unwrap();
        let m = tape.reduce(&x, ReduceKind::Mean, &[0, 1], false).unwrap();
        assert_eq!(m.shape(), &[] as &[usize]);
        assert_eq!(m.item(), 4.0);
    }

    #[test]
    fn max_ties_route_gradient_to_first() {
        let tape = Tape::<f64>::new();
        let x = param(&[2.0, 2.0, 1.0], &[3]);
        let m = tape.reduce(&x, ReduceKind::Max, &[0], false).unwrap();
        assert_eq!(m.item(), 2.0);
        let loss = tape.sum_all(&m).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn spatial_sum_drops_reduced_axes() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::ones(&[3, 4, 5]);
        let s = tape.reduce(&x, ReduceKind::Sum, &[1, 2], false).unwrap();
        assert_eq!(s.shape(), &[3]);
        assert_eq!(s.data(), &[20.0, 20.0, 20.0]);
        let kept = tape.reduce(&x, ReduceKind::Sum, &[1, 2], true).unwrap();
        assert_eq!(kept.shape(), &[3, 1, 1]);
    }

    #[test]
    fn reduce_rejects_empty_and_bad_axes() {
        let tape = Tape::<f64>::new();
        let x = Tensor::<f64>::ones(&[2, 2]);
        assert!(tape.reduce(&x, ReduceKind::Sum, &[], false).is_err());
        assert!(tape.reduce(&x, ReduceKind::Sum, &[2], false).is_err());
        assert!(tape.reduce(&x, ReduceKind::Sum, &[0, 0], false).is_err());
    }

    #[test]
    fn concat_shapes_and_roundtrip() {
        let tape = Tape::<f64>::new();
        let a = Tensor::<f64>::full(&[2, 4, 4], 1.0);
        let b = Tensor::<f64>::full(&[3, 4, 4], 2.0);
        let c = tape.concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.shape(), &[5, 4, 4]);
        let back = tape.slice(&c, 0, 2, 3).unwrap();
        assert_eq!(back.shape(), b.shape());
        assert_eq!(back.data(), b.data());
    }

    #[test]
    fn concat_gradient_splits_ones() {
        let tape = Tape::<f64>::new();
        let a = param(&[1.0, 2.0], &[2]);
        let b = param(&[3.0], &[1]);
        let c = tape.concat(&[&a, &b], 0).unwrap();
        let loss = tape.sum_all(&c).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn concat_middle_axis_interleaves_rows() {
        let tape = Tape::<f64>::new();
        let a = Tensor::from_f64_slice(&[1.0, 2.0, 3.0, 4.0], &[2, 1, 2]).unwrap();
        let b = Tensor::from_f64_slice(&[5.0, 6.0, 7.0, 8.0], &[2, 1, 2]).unwrap();
        let c = tape.concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
    }

    #[test]
    fn slice_gradient_scatters_back() {
        let tape = Tape::<f64>::new();
        let x = param(&[1.0, 2.0, 3.0, 4.0], &[4]);
        let s = tape.slice(&x, 0, 1, 2).unwrap();
        assert_eq!(s.data(), &[2.0, 3.0]);
        let loss = tape.sum_all(&s).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn sqrt_gradient_at_zero_is_zero() {
        let tape = Tape::<f64>::new();
        let x = param(&[0.0, 4.0], &[2]);
        let r = tape.sqrt(&x);
        assert_eq!(r.data(), &[0.0, 2.0]);
        let loss = tape.sum_all(&r).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.25]);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let tape = Tape::<f64>::new();
        let a = Tensor::from_f64_slice(&[1.0, -2.0], &[2]).unwrap();
        let before = a.data().to_vec();
        let _ = tape.relu(&a);
        let _ = tape.scale(&a, 3.0);
        let _ = tape.add(&a, &a).unwrap();
        assert_eq!(a.data(), &before[..]);
    }

    #[test]
    fn div_matches_quotient_rule() {
        let tape = Tape::<f64>::new();
        let a = param(&[6.0], &[1]);
        let b = param(&[3.0], &[1]);
        let q = tape.div(&a, &b).unwrap();
        assert_eq!(q.data(), &[2.0]);
        let loss = tape.sum_all(&q).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0 / 3.0]);
        assert_eq!(b.grad().unwrap(), vec![-6.0 / 9.0]);
    }
}

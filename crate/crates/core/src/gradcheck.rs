//! Central finite-difference verification of every differentiable piece.
//!
//! Analytic gradients come from the tape; numeric ones from central
//! differences at 64-bit. The scalar functional under test is a fixed
//! random weighting of the op output rather than a plain sum, so bugs
//! that merely permute or misroute elements cannot cancel out.

use crate::error::Result;
use crate::model::{PfanetConfig, PfanetModel};
use crate::nn::{Conv2dLayer, UpconvLayer};
use crate::objectives::{gradient_loss, scale_invariant_loss, total_loss, LossWeights, ValidMask};
use crate::params::ParamSet;
use crate::rng::{derive_rng, tag};
use crate::tensor::{ReduceKind, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central-difference step. At 64-bit the truncation error is ~1e-10 for
/// well-scaled functions, far below the pass tolerances.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub probes: usize,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub entries: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(CheckResult::pass)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Values with magnitude in [lo, hi], optionally signed. Keeping a margin
/// around zero means kinked ops (relu, abs) are never probed at a corner.
pub fn conditioned(shape: &[usize], lo: f64, hi: f64, signed: bool, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let mag = rng.gen_range(lo..hi);
            if signed && rng.gen_bool(0.5) {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::from_f64_slice(&vals, shape).expect("shape/values agree")
}

/// Pairwise-distinct values (0.01 apart, far beyond the FD step) so that
/// max-style ops keep their argmax stable under probing.
pub fn distinct_grid(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| 0.3 + 0.01 * i as f64).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    Tensor::from_f64_slice(&vals, shape).expect("shape/values agree")
}

fn probe_indices(numel: usize, want: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if numel <= want {
        return (0..numel).collect();
    }
    let mut all: Vec<usize> = (0..numel).collect();
    for i in (1..numel).rev() {
        let j = rng.gen_range(0..=i);
        all.swap(i, j);
    }
    all.truncate(want);
    all
}

type OpFn<'a> = &'a dyn Fn(&Tape<f64>, &Tensor<f64>) -> Result<Tensor<f64>>;

/// Checks d(weighted sum of op(x)) / dx at `x0` on `probes` coordinates.
pub fn check_input(
    name: &str,
    x0: &Tensor<f64>,
    probes: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    op: OpFn,
) -> Result<CheckResult> {
    let probe_shape = op(&Tape::inference(), x0)?;
    let weights = conditioned(probe_shape.shape(), 0.5, 1.5, false, rng);

    // Numeric side never needs the tape graph.
    let eval = |data: &[f64]| -> Result<f64> {
        let t = Tape::inference();
        let x = Tensor::from_f64_slice(data, x0.shape())?;
        let y = op(&t, &x)?;
        Ok(y
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let tape = Tape::new();
    let x = x0.clone().into_param();
    let y = op(&tape, &x)?;
    let loss = tape.sum_all(&tape.mul(&y, &weights)?)?;
    tape.backward(&loss)?;
    let grad = x.grad().expect("input is a leaf of the loss");

    let base: Vec<f64> = x0.data().to_vec();
    let mut worst = 0.0f64;
    let idxs = probe_indices(base.len(), probes, rng);
    let count = idxs.len();
    for i in idxs {
        let mut plus = base.clone();
        plus[i] += FD_STEP;
        let mut minus = base.clone();
        minus[i] -= FD_STEP;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    Ok(CheckResult {
        name: name.to_string(),
        max_rel_err: worst,
        tol,
        probes: count,
    })
}

/// Checks d(loss)/d(params) for a [`ParamSet`] against central differences,
/// probing a few coordinates of every parameter tensor. Returns one entry
/// per parameter so failures point at the offending tensor.
pub fn check_params_detailed<M: ParamSet<f64>>(
    prefix: &str,
    model: &mut M,
    probes_per_param: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    loss_fn: &dyn Fn(&Tape<f64>, &M) -> Result<Tensor<f64>>,
) -> Result<Vec<CheckResult>> {
    model.clear_grads();
    let tape = Tape::new();
    let loss = loss_fn(&tape, model)?;
    tape.backward(&loss)?;
    // Handles keep pointing at the pre-perturbation storage and its grads
    // even after set_param swaps tensors into the model.
    let originals = model.named_params();

    let mut out = Vec::with_capacity(originals.len());
    for (pname, orig) in &originals {
        let grad = orig.grad().unwrap_or_else(|| vec![0.0; orig.numel()]);
        let base: Vec<f64> = orig.data().to_vec();
        let mut worst = 0.0f64;
        let mut count = 0usize;
        for i in probe_indices(base.len(), probes_per_param, rng) {
            let mut plus = base.clone();
            plus[i] += FD_STEP;
            assert!(model.set_param(pname, Tensor::from_f64_slice(&plus, orig.shape())?));
            let up = loss_fn(&Tape::inference(), model)?.item();

            let mut minus = base.clone();
            minus[i] -= FD_STEP;
            assert!(model.set_param(pname, Tensor::from_f64_slice(&minus, orig.shape())?));
            let down = loss_fn(&Tape::inference(), model)?.item();

            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad[i], numeric));
            count += 1;
        }
        assert!(model.set_param(pname, Tensor::from_f64_slice(&base, orig.shape())?));
        out.push(CheckResult {
            name: format!("{prefix}.{pname}"),
            max_rel_err: worst,
            tol,
            probes: count,
        });
    }
    model.clear_grads();
    Ok(out)
}

/// Adds a small signed offset to every parameter so the check runs at a
/// generic point. A freshly initialized model sits exactly on relu kinks
/// (zero biases meet exact-zero activations), where the objective is not
/// differentiable and finite differences disagree with any subgradient.
pub fn jitter_params<M: ParamSet<f64>>(model: &mut M, lo: f64, hi: f64, rng: &mut ChaCha8Rng) {
    for (name, t) in model.named_params() {
        let offset = conditioned(t.shape(), lo, hi, true, rng);
        let vals: Vec<f64> = t
            .data()
            .iter()
            .zip(offset.data())
            .map(|(a, b)| a + b)
            .collect();
        let shifted = Tensor::from_f64_slice(&vals, t.shape()).expect("same shape");
        let replaced = model.set_param(&name, shifted);
        debug_assert!(replaced, "parameter {name} disappeared during jitter");
    }
}

/// Folded form of [`check_params_detailed`]: a single worst-case entry.
pub fn check_params<M: ParamSet<f64>>(
    name: &str,
    model: &mut M,
    probes_per_param: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    loss_fn: &dyn Fn(&Tape<f64>, &M) -> Result<Tensor<f64>>,
) -> Result<CheckResult> {
    let detailed = check_params_detailed(name, model, probes_per_param, tol, rng, loss_fn)?;
    Ok(CheckResult {
        name: name.to_string(),
        max_rel_err: detailed.iter().map(|e| e.max_rel_err).fold(0.0, f64::max),
        tol,
        probes: detailed.iter().map(|e| e.probes).sum(),
    })
}

/// Runs the whole gradient-check suite: every tape op, every layer, the
/// attention and pyramid blocks, both losses, and a sampled end-to-end
/// model check at `e2e_tol` (looser because path lengths compound
/// round-off).
pub fn run_suite(op_tol: f64, e2e_tol: f64) -> Result<SuiteReport> {
    let mut rng = derive_rng(0xC0FFEE, &[tag::INIT]);
    let mut entries = Vec::new();
    let push = |r: Result<CheckResult>, entries: &mut Vec<CheckResult>| -> Result<()> {
        entries.push(r?);
        Ok(())
    };

    // Elementwise binaries, each side, including a broadcast rhs.
    {
        let shape = [2usize, 3, 4];
        let a = conditioned(&shape, 0.2, 1.5, true, &mut rng);
        let bpos = conditioned(&shape, 0.5, 1.5, false, &mut rng);
        let small = conditioned(&[1, 3, 1], 0.5, 1.5, false, &mut rng);

        let c = bpos.clone();
        push(
            check_input("add.lhs", &a, 8, op_tol, &mut rng, &|t, x| t.add(x, &c)),
            &mut entries,
        )?;
        let c = a.clone();
        push(
            check_input("sub.rhs", &bpos, 8, op_tol, &mut rng, &|t, x| t.sub(&c, x)),
            &mut entries,
        )?;
        let c = bpos.clone();
        push(
            check_input("mul.lhs", &a, 8, op_tol, &mut rng, &|t, x| t.mul(x, &c)),
            &mut entries,
        )?;
        let c = small.clone();
        push(
            check_input("mul.rhs_broadcast", &a, 8, op_tol, &mut rng, &|t, x| {
                t.mul(x, &c)
            }),
            &mut entries,
        )?;
        let c = a.clone();
        push(
            check_input("div.num", &bpos, 8, op_tol, &mut rng, &|t, x| t.div(&c, x)),
            &mut entries,
        )?;
        let c = bpos.clone();
        push(
            check_input("div.den", &bpos, 8, op_tol, &mut rng, &|t, x| t.div(&c, x)),
            &mut entries,
        )?;
    }

    // Broadcast gradient through the small side, done properly: the
    // variable is the [1,3,1] tensor itself.
    {
        let big = conditioned(&[2, 3, 4], 0.5, 1.5, false, &mut rng);
        let small = conditioned(&[1, 3, 1], 0.5, 1.5, false, &mut rng);
        let c = big.clone();
        push(
            check_input("mul.broadcast_small_side", &small, 3, op_tol, &mut rng, &|t, x| {
                t.mul(&c, x)
            }),
            &mut entries,
        )?;
        let c = big.clone();
        push(
            check_input("add.broadcast_small_side", &small, 3, op_tol, &mut rng, &|t, x| {
                t.add(&c, x)
            }),
            &mut entries,
        )?;
    }

    // Unaries, probed away from their kinks.
    {
        let signed = conditioned(&[3, 4], 0.2, 1.5, true, &mut rng);
        push(
            check_input("relu", &signed, 8, op_tol, &mut rng, &|t, x| Ok(t.relu(x))),
            &mut entries,
        )?;
        let signed = conditioned(&[3, 4], 0.2, 1.5, true, &mut rng);
        push(
            check_input("abs", &signed, 8, op_tol, &mut rng, &|t, x| Ok(t.abs(x))),
            &mut entries,
        )?;
        let any = conditioned(&[3, 4], 0.1, 2.0, true, &mut rng);
        push(
            check_input("sigmoid", &any, 8, op_tol, &mut rng, &|t, x| Ok(t.sigmoid(x))),
            &mut entries,
        )?;
        let pos = conditioned(&[3, 4], 0.3, 3.0, false, &mut rng);
        push(
            check_input("log", &pos, 8, op_tol, &mut rng, &|t, x| Ok(t.log(x))),
            &mut entries,
        )?;
        let pos = conditioned(&[3, 4], 0.2, 2.0, false, &mut rng);
        push(
            check_input("sqrt", &pos, 8, op_tol, &mut rng, &|t, x| Ok(t.sqrt(x))),
            &mut entries,
        )?;
        let any = conditioned(&[3, 4], 0.1, 2.0, true, &mut rng);
        push(
            check_input("affine", &any, 8, op_tol, &mut rng, &|t, x| {
                Ok(t.affine(x, 1.7, -0.3))
            }),
            &mut entries,
        )?;
    }

    // Reductions and shape ops.
    {
        let x = conditioned(&[2, 3, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("reduce.sum_axis1", &x, 8, op_tol, &mut rng, &|t, x| {
                t.reduce(x, ReduceKind::Sum, &[1], false)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 3, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("reduce.mean_keepdims", &x, 8, op_tol, &mut rng, &|t, x| {
                t.reduce(x, ReduceKind::Mean, &[0, 2], true)
            }),
            &mut entries,
        )?;
        let x = distinct_grid(&[2, 3, 4], &mut rng);
        push(
            check_input("reduce.max_axis2", &x, 10, op_tol, &mut rng, &|t, x| {
                t.reduce(x, ReduceKind::Max, &[2], false)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 12], 0.1, 1.5, true, &mut rng);
        push(
            check_input("reshape", &x, 6, op_tol, &mut rng, &|t, x| {
                t.reshape(x, &[4, 6])
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 2, 3], 0.1, 1.5, true, &mut rng);
        let c = conditioned(&[2, 2, 3], 0.1, 1.5, true, &mut rng);
        push(
            check_input("concat.lhs", &x, 6, op_tol, &mut rng, &|t, x| {
                t.concat(&[x, &c], 1)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 2, 3], 0.1, 1.5, true, &mut rng);
        let c = conditioned(&[2, 2, 3], 0.1, 1.5, true, &mut rng);
        push(
            check_input("concat.rhs", &x, 6, op_tol, &mut rng, &|t, x| {
                t.concat(&[&c, x], 1)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 5, 3], 0.1, 1.5, true, &mut rng);
        push(
            check_input("slice.mid", &x, 8, op_tol, &mut rng, &|t, x| {
                t.slice(x, 1, 1, 3)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[2, 6], 0.1, 1.5, true, &mut rng);
        push(
            check_input("mean_all", &x, 6, op_tol, &mut rng, &|t, x| t.mean_all(x)),
            &mut entries,
        )?;
    }

    // Convolution w.r.t. input, weight, and bias across its option grid.
    {
        let mk_w = |oc: usize, ic: usize, k: usize, rng: &mut ChaCha8Rng| {
            conditioned(&[oc, ic, k, k], 0.1, 0.6, true, rng)
        };
        let x0 = conditioned(&[2, 3, 5, 5], 0.1, 1.0, true, &mut rng);
        let w0 = mk_w(4, 3, 3, &mut rng);
        let b0 = conditioned(&[4], 0.1, 0.4, true, &mut rng);

        let (w, b) = (w0.clone(), b0.clone());
        push(
            check_input("conv2d.k3.input", &x0, 10, op_tol, &mut rng, &|t, x| {
                t.conv2d(x, &w, &b, 1, 1)
            }),
            &mut entries,
        )?;
        let (xc, b) = (x0.clone(), b0.clone());
        push(
            check_input("conv2d.k3.weight", &w0, 10, op_tol, &mut rng, &|t, w| {
                t.conv2d(&xc, w, &b, 1, 1)
            }),
            &mut entries,
        )?;
        let (xc, w) = (x0.clone(), w0.clone());
        push(
            check_input("conv2d.k3.bias", &b0, 4, op_tol, &mut rng, &|t, b| {
                t.conv2d(&xc, &w, b, 1, 1)
            }),
            &mut entries,
        )?;

        let w1 = mk_w(2, 3, 1, &mut rng);
        let b1 = conditioned(&[2], 0.1, 0.4, true, &mut rng);
        let (w, b) = (w1.clone(), b1.clone());
        push(
            check_input("conv2d.k1.input", &x0, 10, op_tol, &mut rng, &|t, x| {
                t.conv2d(x, &w, &b, 1, 1)
            }),
            &mut entries,
        )?;

        let (w, b) = (w0.clone(), b0.clone());
        push(
            check_input("conv2d.stride2.input", &x0, 10, op_tol, &mut rng, &|t, x| {
                t.conv2d(x, &w, &b, 2, 1)
            }),
            &mut entries,
        )?;
        let x7 = conditioned(&[1, 3, 7, 7], 0.1, 1.0, true, &mut rng);
        let (w, b) = (w0.clone(), b0.clone());
        push(
            check_input("conv2d.dilation2.input", &x7, 10, op_tol, &mut rng, &|t, x| {
                t.conv2d(x, &w, &b, 1, 2)
            }),
            &mut entries,
        )?;
        let (xc, b) = (x7.clone(), b0.clone());
        push(
            check_input("conv2d.dilation2.weight", &w0, 10, op_tol, &mut rng, &|t, w| {
                t.conv2d(&xc, w, &b, 1, 2)
            }),
            &mut entries,
        )?;
    }

    // Pooling and resampling.
    {
        let x = conditioned(&[2, 3, 4, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("global_avg_pool", &x, 8, op_tol, &mut rng, &|t, x| {
                t.global_avg_pool(x)
            }),
            &mut entries,
        )?;
        let x = distinct_grid(&[2, 3, 4, 4], &mut rng);
        push(
            check_input("global_max_pool", &x, 10, op_tol, &mut rng, &|t, x| {
                t.global_max_pool(x)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[1, 2, 3, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("nearest_up2", &x, 8, op_tol, &mut rng, &|t, x| {
                t.nearest_up(x, 2)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[1, 2, 4, 6], 0.1, 1.5, true, &mut rng);
        push(
            check_input("nearest_down2", &x, 8, op_tol, &mut rng, &|t, x| {
                t.nearest_down(x, 2)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[1, 2, 3, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("bilinear_up2", &x, 10, op_tol, &mut rng, &|t, x| {
                t.bilinear_up(x, 2)
            }),
            &mut entries,
        )?;
        let x = conditioned(&[1, 2, 4, 4], 0.1, 1.5, true, &mut rng);
        push(
            check_input("bilinear_up4", &x, 8, op_tol, &mut rng, &|t, x| {
                t.bilinear_up(x, 4)
            }),
            &mut entries,
        )?;
    }

    // Composite layers, via the input path (their kernels are exercised
    // by the chain rule) and then via sampled parameters end-to-end.
    {
        let mut seed_rng = derive_rng(11, &[tag::INIT]);
        let upconv = UpconvLayer::<f64>::new(4, 2, &mut seed_rng)?;
        let x = conditioned(&[1, 4, 4, 4], 0.2, 1.0, true, &mut rng);
        push(
            check_input("upconv.input", &x, 8, op_tol, &mut rng, &|t, x| {
                upconv.forward(t, x)
            }),
            &mut entries,
        )?;

        let conv = Conv2dLayer::<f64>::new(3, 2, 3, 1, 1, &mut seed_rng)?;
        let x = conditioned(&[1, 3, 5, 5], 0.2, 1.0, true, &mut rng);
        push(
            check_input("conv_layer.input", &x, 8, op_tol, &mut rng, &|t, x| {
                conv.forward(t, x)
            }),
            &mut entries,
        )?;

        use crate::model::{Dcam, DcamConfig, DenseAspp, DenseAsppConfig, Spam, SpamConfig};
        let dcam = Dcam::<f64>::new(&DcamConfig { channels: 8, reduction: 2 }, &mut seed_rng)?;
        let x = conditioned(&[1, 8, 4, 4], 0.2, 1.0, true, &mut rng);
        push(
            check_input("dcam.input", &x, 10, op_tol, &mut rng, &|t, x| {
                dcam.forward(t, x)
            }),
            &mut entries,
        )?;

        let spam = Spam::<f64>::new(&SpamConfig { channels: 4, reduction: 2 }, &mut seed_rng)?;
        let x = conditioned(&[1, 4, 8, 8], 0.2, 1.0, true, &mut rng);
        push(
            check_input("spam.input", &x, 10, op_tol, &mut rng, &|t, x| {
                spam.forward(t, x)
            }),
            &mut entries,
        )?;

        let aspp = DenseAspp::<f64>::new(
            &DenseAsppConfig {
                in_channels: 6,
                growth: 3,
                bottleneck: 6,
            },
            &mut seed_rng,
        )?;
        let x = conditioned(&[1, 6, 8, 8], 0.2, 1.0, true, &mut rng);
        push(
            check_input("dense_aspp.input", &x, 10, op_tol, &mut rng, &|t, x| {
                aspp.forward(t, x)
            }),
            &mut entries,
        )?;
    }

    // Both losses w.r.t. the prediction, masked.
    {
        let h = 20;
        let w = 20;
        let pred = conditioned(&[h, w], 1.0, 60.0, false, &mut rng);
        let gt = conditioned(&[h, w], 1.0, 60.0, false, &mut rng);
        let bits: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.8)).collect();
        let mask = ValidMask::new(h, w, bits)?;

        let (g, m) = (gt.clone(), mask.clone());
        push(
            check_input("loss.scale_invariant", &pred, 12, op_tol, &mut rng, &|t, x| {
                scale_invariant_loss(t, x, &g, &m, 0.85)
            }),
            &mut entries,
        )?;
        let (g, m) = (gt.clone(), mask.clone());
        push(
            check_input("loss.gradient", &pred, 12, op_tol, &mut rng, &|t, x| {
                gradient_loss(t, x, &g, &m, &[1, 2, 4, 8, 16])
            }),
            &mut entries,
        )?;
        let (g, m) = (gt.clone(), mask.clone());
        push(
            check_input("loss.total", &pred, 12, op_tol, &mut rng, &|t, x| {
                Ok(total_loss(t, x, &g, &m, &LossWeights::default())?.total)
            }),
            &mut entries,
        )?;
    }

    // End-to-end: sampled parameters of a tiny full model against the
    // complete objective.
    {
        let cfg = PfanetConfig::gradcheck_tiny();
        let mut model = PfanetModel::<f64>::new(&cfg)?;
        jitter_params(&mut model, 0.02, 0.05, &mut rng);
        let x = conditioned(&[1, 3, 32, 32], 0.1, 0.9, false, &mut rng);
        let gt = conditioned(&[32, 32], 2.0, 70.0, false, &mut rng);
        let bits: Vec<bool> = (0..32 * 32).map(|_| rng.gen_bool(0.9)).collect();
        let mask = ValidMask::new(32, 32, bits)?;
        let weights = LossWeights::default();
        push(
            check_params("model.e2e", &mut model, 2, e2e_tol, &mut rng, &{
                let x = x.clone();
                let gt = gt.clone();
                let mask = mask.clone();
                move |t: &Tape<f64>, m: &PfanetModel<f64>| {
                    let pred = m.forward(t, &x)?;
                    Ok(total_loss(t, &pred, &gt, &mask, &weights)?.total)
                }
            }),
            &mut entries,
        )?;
    }

    Ok(SuiteReport { entries })
}

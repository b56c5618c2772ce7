//! Loss values checked against brute-force scalar-loop oracles.
//!
//! The oracles below are written directly from the loss definitions with
//! plain nested loops and no masking tricks, so they share nothing with
//! the tape-based implementation.

use pfanet_core::objectives::{gradient_loss, scale_invariant_loss, ValidMask};
use pfanet_core::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive two-pass evaluation of the scale-invariant log loss.
fn oracle_scale_invariant(pred: &[f64], gt: &[f64], mask: &[bool], lambda: f64) -> f64 {
    let mut t = 0usize;
    let mut sum = 0.0;
    for i in 0..pred.len() {
        if mask[i] {
            t += 1;
            sum += pred[i].ln() - gt[i].ln();
        }
    }
    let mut sum_sq = 0.0;
    for i in 0..pred.len() {
        if mask[i] {
            let e = pred[i].ln() - gt[i].ln();
            sum_sq += e * e;
        }
    }
    let t = t as f64;
    sum_sq / t - lambda * (sum / t) * (sum / t)
}

/// Brute-force loop over spacing, row, column for the gradient loss.
fn oracle_gradient(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    h: usize,
    w: usize,
    spacings: &[usize],
) -> f64 {
    let ratio = |d: &[f64], hi: usize, lo: usize| (d[hi] - d[lo]) / (d[hi] + d[lo]).abs();
    let t = mask.iter().filter(|&&b| b).count() as f64;
    let mut total = 0.0;
    for &s in spacings {
        for i in 0..h {
            for j in 0..w {
                if i + s >= h || j + s >= w {
                    continue;
                }
                let at = i * w + j;
                let down = (i + s) * w + j;
                let right = i * w + (j + s);
                if !(mask[at] && mask[down] && mask[right]) {
                    continue;
                }
                let dy = ratio(pred, down, at) - ratio(gt, down, at);
                let dx = ratio(pred, right, at) - ratio(gt, right, at);
                total += (dx * dx + dy * dy).sqrt();
            }
        }
    }
    total / t
}

struct Instance {
    h: usize,
    w: usize,
    pred: Vec<f64>,
    gt: Vec<f64>,
    bits: Vec<bool>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    // Large enough for every standard spacing, with roughly 30% invalid.
    let h = rng.gen_range(17..=24);
    let w = rng.gen_range(17..=24);
    let n = h * w;
    let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..80.0)).collect();
    let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..80.0)).collect();
    let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    assert!(bits.iter().any(|&b| b), "instance must keep a valid pixel");
    Instance { h, w, pred, gt, bits }
}

#[test]
fn losses_match_loop_oracles_on_200_random_masked_instances() {
    let spacings = [1usize, 2, 4, 8, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(0x105E5);
    let mut worst_d = 0.0f64;
    let mut worst_g = 0.0f64;
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let mask = ValidMask::new(inst.h, inst.w, inst.bits.clone()).unwrap();
        let tape = Tape::<f64>::new();
        let pred = Tensor::from_f64_slice(&inst.pred, &[inst.h, inst.w]).unwrap();
        let gt = Tensor::from_f64_slice(&inst.gt, &[inst.h, inst.w]).unwrap();

        let l_d = scale_invariant_loss(&tape, &pred, &gt, &mask, 0.85)
            .unwrap()
            .item();
        let want_d = oracle_scale_invariant(&inst.pred, &inst.gt, &inst.bits, 0.85);
        worst_d = worst_d.max((l_d - want_d).abs());

        let l_g = gradient_loss(&tape, &pred, &gt, &mask, &spacings)
            .unwrap()
            .item();
        let want_g = oracle_gradient(&inst.pred, &inst.gt, &inst.bits, inst.h, inst.w, &spacings);
        worst_g = worst_g.max((l_g - want_g).abs());
    }
    assert!(worst_d < 1e-9, "scale-invariant loss drifted {worst_d:e}");
    assert!(worst_g < 1e-9, "gradient loss drifted {worst_g:e}");
}

#[test]
fn scale_invariant_loss_is_permutation_symmetric() {
    // Shuffling pixels identically in pred, gt and mask cannot change a
    // loss that never looks at pixel positions.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 64usize;
    let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..80.0)).collect();
    let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..80.0)).collect();
    let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();

    let eval = |p: &[f64], g: &[f64], b: &[bool]| {
        let tape = Tape::<f64>::new();
        let pt = Tensor::from_f64_slice(p, &[8, 8]).unwrap();
        let gt_t = Tensor::from_f64_slice(g, &[8, 8]).unwrap();
        let mask = ValidMask::new(8, 8, b.to_vec()).unwrap();
        scale_invariant_loss(&tape, &pt, &gt_t, &mask, 0.85)
            .unwrap()
            .item()
    };
    let base = eval(&pred, &gt, &bits);

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let pp: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
    let gp: Vec<f64> = order.iter().map(|&i| gt[i]).collect();
    let bp: Vec<bool> = order.iter().map(|&i| bits[i]).collect();
    let shuffled = eval(&pp, &gp, &bp);
    assert!((base - shuffled).abs() < 1e-12);
}

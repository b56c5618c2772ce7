//! Deterministic epoch shuffling and batching.

use crate::error::{Error, Result};
use crate::rng::{derive_rng, tag};
use rand::Rng;

/// The sample order for one epoch: a Fisher-Yates shuffle of 0..n keyed
/// by (seed, epoch), so any epoch's order is reconstructible on resume
/// without replaying earlier epochs.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = derive_rng(seed, &[tag::SHUFFLE, epoch]);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Splits the epoch order into consecutive batches, keeping the final
/// partial batch.
pub fn epoch_batches(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    Ok(epoch_order(n, seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_final_batch_is_kept() {
        let batches = epoch_batches(10, 4, 1, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_order() {
        assert_eq!(epoch_order(50, 7, 3), epoch_order(50, 7, 3));
    }

    #[test]
    fn different_epochs_permute_differently() {
        assert_ne!(epoch_order(50, 7, 0), epoch_order(50, 7, 1));
        assert_ne!(epoch_order(50, 7, 1), epoch_order(50, 7, 2));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(epoch_batches(0, 4, 1, 0).is_err());
        assert!(epoch_batches(4, 0, 1, 0).is_err());
    }
}

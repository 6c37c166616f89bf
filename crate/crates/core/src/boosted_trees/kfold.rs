use rand::seq::SliceRandom;

use super::GbtError;
use crate::rng::rng_from;

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most
/// one. Each fold is returned sorted ascending.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, GbtError> {
    if k < 2 || n < k {
        return Err(GbtError::BadFoldCount { n, k });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const NUM_FOLDS: usize = 5;
pub const MIN_CLIPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Clip-level five-fold split. Shuffled clips are cut into five equal
/// chunks; fold `k` holds out chunk `k`, using its first half for
/// validation and its second half for testing, and trains on the rest.
/// Held-out chunks partition the clips, and test sets are pairwise disjoint.
pub fn kfold_split(clip_ids: &[String], seed: u64) -> Result<Vec<Fold>> {
    let mut clips: Vec<String> = clip_ids.to_vec();
    clips.sort();
    clips.dedup();
    if clips.len() < MIN_CLIPS {
        return Err(Error::Invalid(format!(
            "cross-validation needs at least {MIN_CLIPS} clips, got {}",
            clips.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clips.shuffle(&mut rng);
    let n = clips.len();
    let bounds: Vec<usize> = (0..=NUM_FOLDS).map(|k| k * n / NUM_FOLDS).collect();
    Ok((0..NUM_FOLDS)
        .map(|k| {
            let held = &clips[bounds[k]..bounds[k + 1]];
            let half = held.len() / 2;
            let train = clips[..bounds[k]]
                .iter()
                .chain(&clips[bounds[k + 1]..])
                .cloned()
                .collect();
            Fold {
                train,
                val: held[..half].to_vec(),
                test: held[half..].to_vec(),
            }
        })
        .collect())
}

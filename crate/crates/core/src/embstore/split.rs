use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ItemId;

/// Train/validation/test partition of item ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<ItemId>,
    pub val: Vec<ItemId>,
    pub test: Vec<ItemId>,
}

impl SplitSpec {
    pub fn new(train: Vec<ItemId>, val: Vec<ItemId>, test: Vec<ItemId>) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.check_disjoint()?;
        Ok(spec)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen: HashSet<&ItemId> = HashSet::new();
        let mut overlap = Vec::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                overlap.push(id.to_string());
            }
        }
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(Error::Split(format!(
                "ids appear more than once across splits: {}",
                overlap.join(",")
            )))
        }
    }

    pub fn all_ids(&self) -> impl Iterator<Item = &ItemId> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

fn seeded_shuffle(ids: &[ItemId], seed: u64) -> Vec<ItemId> {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    shuffled
}

fn floor_count(fraction: f64, n: usize) -> usize {
    // absorbs products like 0.29 * 100 = 28.999999999999996
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Deterministic shuffled partition. Validation and test sizes are floor
/// allocations; the remainder goes to train.
pub fn make_split(ids: &[ItemId], fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let (f_train, f_val, f_test) = fractions;
    if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) {
        return Err(Error::Split(format!(
            "fractions must be positive, got {fractions:?}"
        )));
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions must sum to 1, got {}",
            f_train + f_val + f_test
        )));
    }
    let n = ids.len();
    let n_val = floor_count(f_val, n);
    let n_test = floor_count(f_test, n);
    let n_train = n.saturating_sub(n_val + n_test);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Split(format!(
            "{n} ids give an empty split (train {n_train}, val {n_val}, test {n_test})"
        )));
    }
    let shuffled = seeded_shuffle(ids, seed);
    let mut rest = shuffled.into_iter();
    let train: Vec<_> = rest.by_ref().take(n_train).collect();
    let val: Vec<_> = rest.by_ref().take(n_val).collect();
    let test: Vec<_> = rest.collect();
    SplitSpec::new(train, val, test)
}

/// Holds out `floor(fraction·n)` ids (at least one) after a seeded shuffle.
/// Returns `(kept, held_out)`.
pub fn hold_out(ids: &[ItemId], fraction: f64, seed: u64) -> Result<(Vec<ItemId>, Vec<ItemId>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!(
            "hold-out fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_out = floor_count(fraction, ids.len()).max(1);
    if n_out >= ids.len() {
        return Err(Error::Split(format!(
            "cannot hold out {n_out} of {} ids",
            ids.len()
        )));
    }
    let mut shuffled = seeded_shuffle(ids, seed);
    let held = shuffled.split_off(ids.len() - n_out);
    Ok((shuffled, held))
}

//! Three-fold subject splitting.
//!
//! The ids are shuffled with the `folds` stream of the seed and cut into six
//! equal blocks. Fold `k` tests on block `k`, validates on block `k + 3` and
//! trains on everything else, so the three test blocks are disjoint.

use rand::seq::SliceRandom;

use crate::rng;

use super::DataError;

pub const NUM_FOLDS: usize = 3;
/// Subjects per test (and validation) block under the strict protocol.
pub const BLOCK: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FoldPolicy {
    /// 5-subject test and validation blocks; needs at least 30 subjects.
    #[default]
    Strict,
    /// Blocks of `n / 6` subjects (at least one), for smaller datasets.
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl FoldSplit {
    /// Ids of the named split (`train`, `val` or `test`).
    pub fn split(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

pub fn make_folds(ids: &[String], seed: u64, policy: FoldPolicy) -> Result<[FoldSplit; NUM_FOLDS], DataError> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(DataError::Folds("duplicate subject ids".into()));
    }
    let n = sorted.len();
    let block = match policy {
        FoldPolicy::Strict if n < 2 * NUM_FOLDS * BLOCK => {
            return Err(DataError::Folds(format!(
                "{n} subjects; the 20/5/5 protocol needs at least {} (use the proportional policy for fewer)",
                2 * NUM_FOLDS * BLOCK
            )))
        }
        FoldPolicy::Strict => BLOCK,
        FoldPolicy::Proportional if n < 2 * NUM_FOLDS + 1 => {
            return Err(DataError::Folds(format!(
                "{n} subjects; need at least {} to leave a training set",
                2 * NUM_FOLDS + 1
            )))
        }
        FoldPolicy::Proportional => n / (2 * NUM_FOLDS),
    };
    let mut order = sorted;
    order.shuffle(&mut rng::stream(seed, "folds"));
    let blocks: Vec<&[String]> = order[..2 * NUM_FOLDS * block].chunks(block).collect();
    let rest = &order[2 * NUM_FOLDS * block..];
    let fold = |k: usize| {
        let val_block = k + NUM_FOLDS;
        let mut train: Vec<String> = blocks
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != k && b != val_block)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .chain(rest.iter().cloned())
            .collect();
        train.sort();
        let mut val = blocks[val_block].to_vec();
        val.sort();
        let mut test = blocks[k].to_vec();
        test.sort();
        FoldSplit {
            fold: k,
            train,
            val,
            test,
        }
    };
    Ok([fold(0), fold(1), fold(2)])
}

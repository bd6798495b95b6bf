//! Stratified train/test split with cross-validation folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAIN_FRACTION_NUM: usize = 3;
pub const TRAIN_FRACTION_DEN: usize = 4;
pub const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    /// Sorted ascending.
    pub train_ids: Vec<u64>,
    /// Sorted ascending.
    pub test_ids: Vec<u64>,
    /// Five disjoint folds tiling `train_ids`, each sorted ascending.
    pub cv_folds: Vec<Vec<u64>>,
}

/// Split `ids` 75/25, stratified by `labels`, then deal the training portion
/// into five stratified folds. Deterministic in `(ids, labels, seed)` and
/// independent of input order.
pub fn make_split(ids: &[u64], labels: &[bool], seed: u64) -> Result<SplitPlan> {
    if ids.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids but {} labels",
            ids.len(),
            labels.len()
        )));
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty id list".into()));
    }
    let n = ids.len();
    // round-half-up of 0.75 n
    let n_train = (TRAIN_FRACTION_NUM * n + TRAIN_FRACTION_DEN / 2) / TRAIN_FRACTION_DEN;
    if n_train < CV_FOLDS {
        return Err(Error::InvalidArgument(format!(
            "{n} ids leave {n_train} training ids; need at least {CV_FOLDS} for cross-validation"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(u64, bool)> = ids.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_unstable();
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate ids in split input".into()));
    }
    let mut strata: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for (id, label) in pairs {
        strata[label as usize].push(id);
    }
    for s in &mut strata {
        s.shuffle(&mut rng);
    }

    // Largest-remainder allocation keeps the total at exactly n_train.
    let mut quota: [usize; 2] = [0; 2];
    let mut remainders: [(usize, usize); 2] = [(0, 0), (0, 1)];
    for c in 0..2 {
        let exact = TRAIN_FRACTION_NUM * strata[c].len();
        quota[c] = exact / TRAIN_FRACTION_DEN;
        remainders[c] = (exact % TRAIN_FRACTION_DEN, c);
    }
    let mut missing = n_train - quota[0] - quota[1];
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in &remainders {
        if missing == 0 {
            break;
        }
        if quota[c] < strata[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut train_ids = Vec::with_capacity(n_train);
    let mut test_ids = Vec::with_capacity(n - n_train);
    let mut cv_folds = vec![Vec::new(); CV_FOLDS];
    let mut dealt = 0usize;
    for c in 0..2 {
        let (train, test) = strata[c].split_at(quota[c]);
        for &id in train {
            cv_folds[dealt % CV_FOLDS].push(id);
            dealt += 1;
        }
        train_ids.extend_from_slice(train);
        test_ids.extend_from_slice(test);
    }
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    for f in &mut cv_folds {
        f.sort_unstable();
    }
    Ok(SplitPlan {
        seed,
        train_ids,
        test_ids,
        cv_folds,
    })
}

impl SplitPlan {
    pub fn is_train(&self, id: u64) -> bool {
        self.train_ids.binary_search(&id).is_ok()
    }

    pub fn fold_of(&self, id: u64) -> Option<usize> {
        self.cv_folds.iter().position(|f| f.binary_search(&id).is_ok())
    }

    pub fn total(&self) -> usize {
        self.train_ids.len() + self.test_ids.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn labels(n: usize, every: usize) -> Vec<bool> {
        (0..n).map(|i| i % every == 0).collect()
    }

    #[test]
    fn hundred_ids_split_75_25() {
        let ids: Vec<u64> = (0..100).collect();
        let plan = make_split(&ids, &labels(100, 3), 7).unwrap();
        assert_eq!(plan.train_ids.len(), 75);
        assert_eq!(plan.test_ids.len(), 25);
        assert_eq!(plan.cv_folds.len(), 5);
        assert!(plan.cv_folds.iter().all(|f| f.len() == 15));
    }

    #[test]
    fn deterministic_for_seed() {
        let ids: Vec<u64> = (0..100).collect();
        let a = make_split(&ids, &labels(100, 4), 7).unwrap();
        let b = make_split(&ids, &labels(100, 4), 7).unwrap();
        assert_eq!(a, b);
        let mut reversed_ids = ids.clone();
        reversed_ids.reverse();
        let mut reversed_labels = labels(100, 4);
        reversed_labels.reverse();
        assert_eq!(make_split(&reversed_ids, &reversed_labels, 7).unwrap(), a);
        assert_ne!(make_split(&ids, &labels(100, 4), 8).unwrap(), a);
    }

    #[test]
    fn too_few_ids() {
        let ids = [1, 2, 3, 4];
        assert!(matches!(
            make_split(&ids, &[true, false, true, false], 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(make_split(&[], &[], 1).is_err());
    }

    #[test]
    fn stratified_by_label() {
        let ids: Vec<u64> = (0..1000).collect();
        let lab = labels(1000, 10);
        let plan = make_split(&ids, &lab, 3).unwrap();
        let pos_train = plan.train_ids.iter().filter(|&&i| lab[i as usize]).count();
        assert_eq!(pos_train, 75);
        for f in &plan.cv_folds {
            let pos = f.iter().filter(|&&i| lab[i as usize]).count();
            assert_eq!(pos, 15);
        }
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 7usize..400, every in 1usize..9, seed in any::<u64>()) {
            let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 11).collect();
            let lab = labels(n, every);
            let plan = make_split(&ids, &lab, seed).unwrap();
            let train: BTreeSet<u64> = plan.train_ids.iter().copied().collect();
            let test: BTreeSet<u64> = plan.test_ids.iter().copied().collect();
            prop_assert!(train.is_disjoint(&test));
            let all: BTreeSet<u64> = train.union(&test).copied().collect();
            prop_assert_eq!(all, ids.iter().copied().collect::<BTreeSet<_>>());
            let exact = 0.75 * n as f64;
            prop_assert!((plan.train_ids.len() as f64 - exact).abs() <= 1.0);
            let mut tiled: Vec<u64> = plan.cv_folds.concat();
            tiled.sort_unstable();
            prop_assert_eq!(tiled, plan.train_ids.clone());
            let sizes: Vec<usize> = plan.cv_folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}

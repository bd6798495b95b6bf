//! Random forest: bootstrap-weighted trees with per-node feature sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::preprocess::{EncounterVector, FeatureSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Voting {
    /// Mean of the leaf positive fractions.
    #[default]
    Soft,
    /// Fraction of trees whose leaf majority is positive.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features drawn per node; unset means ceil(sqrt(active features)).
    pub features_per_split: Option<usize>,
    pub voting: Voting,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 250,
            max_depth: 5,
            features_per_split: None,
            voting: Voting::Soft,
        }
    }
}

/// Which training rows each tree saw; kept only in memory for OOB estimates.
#[derive(Debug, Clone, Default)]
struct Bags {
    ids: Vec<u64>,
    in_bag: Vec<Vec<u64>>,
}

impl Bags {
    fn contains(&self, tree: usize, row: usize) -> bool {
        self.in_bag[tree][row / 64] & (1 << (row % 64)) != 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
    /// Features the forest was allowed to split on.
    pub active: Vec<bool>,
    #[serde(skip)]
    bags: Bags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobEstimate {
    /// Misclassification rate of the out-of-bag vote at threshold 0.5.
    pub error: f64,
    pub evaluated: usize,
    /// Rows that were in every tree's bootstrap sample.
    pub skipped: usize,
}

impl RandomForest {
    pub fn train(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        Self::train_masked(schema, rows, params, &vec![true; schema.len()], seed)
    }

    /// Train using only the features flagged in `active`.
    pub fn train_masked(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &ForestParams,
        active: &[bool],
        seed: u64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("random forest needs training rows".into()));
        }
        if params.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be positive".into()));
        }
        if active.len() != schema.len() {
            return Err(Error::InvalidArgument(format!(
                "feature mask has {} entries for {} features",
                active.len(),
                schema.len()
            )));
        }
        let n_active = active.iter().filter(|a| **a).count();
        if n_active == 0 {
            return Err(Error::InvalidArgument("no active features".into()));
        }
        let per_split = params
            .features_per_split
            .unwrap_or_else(|| (n_active as f64).sqrt().ceil() as usize)
            .clamp(1, n_active);
        let cols = Columns::new(schema, rows);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            features_per_split: Some(per_split),
            active: active.to_vec(),
        };
        let n = rows.len();
        let grown: Vec<(DecisionTree, Vec<u64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut weights = vec![0.0; n];
                let mut bag = vec![0u64; n.div_ceil(64)];
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    weights[i] += 1.0;
                    bag[i / 64] |= 1 << (i % 64);
                }
                (grow(&cols, &weights, &tree_params, &mut rng), bag)
            })
            .collect();
        let (trees, in_bag) = grown.into_iter().unzip();
        Ok(Self {
            params: params.clone(),
            trees,
            active: active.to_vec(),
            bags: Bags {
                ids: rows.iter().map(|r| r.encounter_id).collect(),
                in_bag,
            },
        })
    }

    fn vote(&self, tree: &DecisionTree, x: &EncounterVector) -> f64 {
        let p = tree.leaf_positive(x);
        match self.params.voting {
            Voting::Soft => p,
            Voting::Hard => (p > 0.5) as u8 as f64,
        }
    }

    pub fn score(&self, x: &EncounterVector) -> f64 {
        self.trees.iter().map(|t| self.vote(t, x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Out-of-bag misclassification on the exact rows the forest was trained
    /// on (same order). Unavailable for a forest loaded from disk.
    pub fn oob_error(&self, rows: &[EncounterVector]) -> Result<OobEstimate> {
        if self.bags.in_bag.is_empty() {
            return Err(Error::InvalidArgument(
                "bootstrap bookkeeping is not kept with saved models".into(),
            ));
        }
        if rows.len() != self.bags.ids.len()
            || rows.iter().zip(&self.bags.ids).any(|(r, id)| r.encounter_id != *id)
        {
            return Err(Error::InvalidArgument(
                "OOB rows differ from the training rows".into(),
            ));
        }
        let votes: Vec<Option<bool>> = rows
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let (sum, count) = self
                    .trees
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| !self.bags.contains(*t, i))
                    .fold((0.0, 0usize), |(s, c), (_, tree)| (s + self.vote(tree, x), c + 1));
                (count > 0).then(|| (sum / count as f64 >= 0.5) != x.label)
            })
            .collect();
        let evaluated = votes.iter().filter(|v| v.is_some()).count();
        if evaluated == 0 {
            return Err(Error::Numerical("no row is out of bag for any tree".into()));
        }
        let wrong = votes.iter().filter(|v| **v == Some(true)).count();
        Ok(OobEstimate {
            error: wrong as f64 / evaluated as f64,
            evaluated,
            skipped: rows.len() - evaluated,
        })
    }
}

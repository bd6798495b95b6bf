//! Discrete AdaBoost over shallow weighted trees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, DecisionTree, TreeParams};
use super::sigmoid;
use crate::error::{Error, Result};
use crate::preprocess::{EncounterVector, FeatureSchema};

/// Weighted error used in place of an exact zero so the round weight stays
/// finite.
pub const ZERO_ERROR_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    /// Depth of each weak tree.
    pub max_depth: usize,
    /// Features drawn per node of a weak tree; unset uses all of them.
    pub features_per_split: Option<usize>,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub alpha: f64,
    /// Weighted training error of the weak learner when it was fitted.
    pub error: f64,
    pub tree: DecisionTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub params: BoostParams,
    pub rounds: Vec<Round>,
    /// Why boosting ended before `params.rounds`, if it did.
    pub stopped_early: Option<String>,
}

impl AdaBoost {
    pub fn train(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &BoostParams,
        seed: u64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("boosting needs training rows".into()));
        }
        let cols = Columns::new(schema, rows);
        let tree_params = TreeParams {
            max_depth: params.max_depth.max(1),
            features_per_split: params.features_per_split,
            active: vec![true; schema.len()],
        };
        let n = rows.len();
        let mut w = vec![1.0 / n as f64; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rounds = Vec::with_capacity(params.rounds);
        let mut stopped_early = None;
        for r in 0..params.rounds {
            let tree = grow(&cols, &w, &tree_params, &mut rng);
            let preds: Vec<bool> = rows.iter().map(|x| tree.predict(x)).collect();
            let total: f64 = w.iter().sum();
            let err = preds
                .iter()
                .zip(rows)
                .zip(&w)
                .filter(|((p, x), _)| **p != x.label)
                .map(|(_, wi)| wi)
                .sum::<f64>()
                / total;
            if !err.is_finite() {
                return Err(Error::Numerical(format!(
                    "boosting round {r}: weighted error is not finite"
                )));
            }
            if err >= 0.5 {
                stopped_early = Some(format!(
                    "round {r}: weak learner error {err:.4} is not below 0.5"
                ));
                break;
            }
            let perfect = err <= ZERO_ERROR_CLAMP;
            let e = err.max(ZERO_ERROR_CLAMP);
            let alpha = 0.5 * ((1.0 - e) / e).ln();
            rounds.push(Round {
                alpha,
                error: err,
                tree,
            });
            if perfect {
                stopped_early = Some(format!("round {r}: weak learner fits the training set"));
                break;
            }
            for ((wi, p), x) in w.iter_mut().zip(&preds).zip(rows) {
                let agree = if *p == x.label { 1.0 } else { -1.0 };
                *wi *= (-alpha * agree).exp();
            }
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= z);
        }
        Ok(Self {
            params: params.clone(),
            rounds,
            stopped_early,
        })
    }

    /// Signed ensemble margin, sum of alpha * (+1 | -1).
    pub fn margin(&self, x: &EncounterVector) -> f64 {
        self.rounds
            .iter()
            .map(|r| if r.tree.predict(x) { r.alpha } else { -r.alpha })
            .sum()
    }

    /// Logistic squashing of the margin into (0, 1).
    pub fn score(&self, x: &EncounterVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

//! Run configuration: one TOML file plus a seed controls a whole run.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! The hash embedded in reports covers everything except the output
//! directory, so moving a run's output does not change its reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{CostParams, Cents, DEFAULT_ALPHA_DOLLARS, DEFAULT_BETA_DOLLARS};
use crate::error::{Error, Result};
use crate::models::{
    BayesNetParams, BoostParams, ForestParams, LearnerConfig, MlpParams, ModelKind, NaiveBayesParams,
};
use crate::preprocess::Task;
use crate::rules::{ClassFilter, DEFAULT_MAX_LEN, DEFAULT_MIN_SUPPORT};

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Encounter table (CSV).
    pub dataset: PathBuf,
    /// Admission/discharge id descriptions; optional.
    pub mappings: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/diabetic_data.csv"),
            mappings: Some(PathBuf::from("data/IDs_mapping.csv")),
        }
    }
}

/// Hyperparameter grids searched by 5-fold cross-validation. Parameters not
/// listed here come from the per-model sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub enabled: bool,
    pub random_forest_n_trees: Vec<usize>,
    pub adaboost_rounds: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            random_forest_n_trees: vec![50, 250],
            adaboost_rounds: vec![100],
            mlp_hidden: vec![2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub tasks: Vec<Task>,
    /// Fraction of the training split used for the retrains, in `(0, 1]`.
    pub subsample: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            tasks: vec![Task::AnyReadmission, Task::Differentiate],
            subsample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    /// Absolute support threshold within the mined class.
    pub min_support: usize,
    pub max_len: usize,
    /// Mine the filtered encounters instead of the full table.
    pub filtered: bool,
    pub classes: Vec<ClassFilter>,
}

impl Default for RulesConfig {
    fn default() -> Self {
        Self {
            min_support: DEFAULT_MIN_SUPPORT,
            max_len: DEFAULT_MAX_LEN,
            filtered: false,
            classes: vec![ClassFilter::Readmitted, ClassFilter::No],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Cost of one readmission, dollars.
    pub alpha: f64,
    /// Cost of one extra admission day, dollars.
    pub beta: f64,
    /// Replace `beta` by `alpha` over the mean stay of the filtered data.
    pub derive_beta: bool,
    /// Also tune the threshold on a validation fold and report on test.
    pub honest: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA_DOLLARS as f64,
            beta: DEFAULT_BETA_DOLLARS as f64,
            derive_beta: false,
            honest: true,
        }
    }
}

impl CostConfig {
    pub fn params(&self) -> Result<CostParams> {
        CostParams::new(Cents::from_dollars_f64(self.alpha)?, Cents::from_dollars_f64(self.beta)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Report directory; not part of the config hash.
    pub output: PathBuf,
    pub data: DataConfig,
    /// Tasks evaluated by `train-eval`.
    pub tasks: Vec<Task>,
    pub models: Vec<ModelKind>,
    pub naive_bayes: NaiveBayesParams,
    pub bayes_net: BayesNetParams,
    pub random_forest: ForestParams,
    pub adaboost: BoostParams,
    pub mlp: MlpParams,
    pub cv: CvConfig,
    pub ablation: AblationConfig,
    pub rules: RulesConfig,
    pub cost: CostConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            tasks: vec![Task::ShortTerm, Task::AnyReadmission],
            models: ModelKind::ALL.to_vec(),
            naive_bayes: Default::default(),
            bayes_net: Default::default(),
            random_forest: Default::default(),
            adaboost: Default::default(),
            mlp: Default::default(),
            cv: Default::default(),
            ablation: Default::default(),
            rules: Default::default(),
            cost: Default::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reject values no stage could run with; path existence is checked by
    /// the stage that reads the file.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return bad("`models` is empty".into());
        }
        if self.tasks.is_empty() {
            return bad("`tasks` is empty".into());
        }
        if !(self.ablation.subsample > 0.0 && self.ablation.subsample <= 1.0) {
            return bad(format!("ablation.subsample must be in (0, 1], got {}", self.ablation.subsample));
        }
        if self.rules.min_support == 0 || self.rules.max_len == 0 {
            return bad("rules.min_support and rules.max_len must be positive".into());
        }
        if self.rules.classes.is_empty() {
            return bad("rules.classes is empty".into());
        }
        let cv = &self.cv;
        if cv.random_forest_n_trees.contains(&0) || cv.adaboost_rounds.contains(&0) || cv.mlp_hidden.contains(&0) {
            return bad("cross-validation grids must hold positive values".into());
        }
        self.cost.params().map_err(|e| Error::Config(format!("cost: {e}")))?;
        Ok(())
    }

    /// Hyperparameters of `kind` from its config section.
    pub fn learner(&self, kind: ModelKind) -> LearnerConfig {
        match kind {
            ModelKind::NaiveBayes => LearnerConfig::NaiveBayes(self.naive_bayes.clone()),
            ModelKind::BayesNet => LearnerConfig::BayesNet(self.bayes_net.clone()),
            ModelKind::RandomForest => LearnerConfig::RandomForest(self.random_forest.clone()),
            ModelKind::AdaBoost => LearnerConfig::AdaBoost(self.adaboost.clone()),
            ModelKind::Mlp => LearnerConfig::Mlp(self.mlp.clone()),
        }
    }

    /// Candidate configurations for cross-validation of `kind`: the model's
    /// section with each grid value substituted. An empty grid means the
    /// section value alone.
    pub fn candidates(&self, kind: ModelKind) -> Vec<LearnerConfig> {
        let expand = |grid: &[usize], make: &dyn Fn(usize) -> LearnerConfig| {
            if grid.is_empty() {
                vec![self.learner(kind)]
            } else {
                grid.iter().map(|&v| make(v)).collect()
            }
        };
        match kind {
            ModelKind::RandomForest => expand(&self.cv.random_forest_n_trees, &|n| {
                LearnerConfig::RandomForest(ForestParams {
                    n_trees: n,
                    ..self.random_forest.clone()
                })
            }),
            ModelKind::AdaBoost => expand(&self.cv.adaboost_rounds, &|n| {
                LearnerConfig::AdaBoost(BoostParams {
                    rounds: n,
                    ..self.adaboost.clone()
                })
            }),
            ModelKind::Mlp => expand(&self.cv.mlp_hidden, &|n| {
                LearnerConfig::Mlp(MlpParams {
                    hidden: n,
                    ..self.mlp.clone()
                })
            }),
            _ => vec![self.learner(kind)],
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// with the output directory left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn shipped_default_file_matches_defaults() {
        let text = include_str!("../../../config/default.toml");
        assert_eq!(RunConfig::from_toml(text).unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[random_forest]\nntrees = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(RunConfig::from_toml("sed = 1\n").is_err());
    }

    #[test]
    fn hash_ignores_output_but_not_parameters() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.mlp.l2 = 0.01;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "models = []",
            "[ablation]\nsubsample = 0.0",
            "[cost]\nalpha = 100.0\nbeta = 200.0",
            "[rules]\nmin_support = 0",
            "[cv]\nmlp_hidden = [0]",
        ] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Usage, "{text}: {err}");
        }
    }

    #[test]
    fn grids_expand_over_section_values() {
        let mut cfg = RunConfig::default();
        cfg.cv.random_forest_n_trees = vec![50, 100];
        cfg.random_forest.max_depth = 7;
        let c = cfg.candidates(ModelKind::RandomForest);
        assert_eq!(c.len(), 2);
        match &c[1] {
            LearnerConfig::RandomForest(p) => assert_eq!((p.n_trees, p.max_depth), (100, 7)),
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.candidates(ModelKind::NaiveBayes).len(), 1);
        cfg.cv.mlp_hidden.clear();
        assert_eq!(cfg.candidates(ModelKind::Mlp), vec![cfg.learner(ModelKind::Mlp)]);
    }
}

//! Classifiers behind one scoring contract.
//!
//! Every learner turns schema-conformant training rows into a [`Scorer`]
//! that maps an encounter to a positive-class score in `[0, 1]`. Scorers
//! carry the schema they were fitted against and refuse rows encoded with a
//! different one.

pub mod adaboost;
pub mod bayes_net;
pub mod bfgs;
pub mod cv;
pub mod forest;
pub mod mlp;
pub mod naive_bayes;
pub mod tree;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{EncounterVector, FeatureSchema, SchemaFingerprint};

pub use adaboost::{AdaBoost, BoostParams};
pub use bayes_net::{BayesNet, BayesNetParams};
pub use bfgs::{BfgsOptions, BfgsReport, Termination};
pub use cv::{cross_validate, CvCandidate, CvReport};
pub use forest::{ForestParams, OobEstimate, RandomForest, Voting};
pub use mlp::{Mlp, MlpObjective, MlpParams};
pub use naive_bayes::{NaiveBayes, NaiveBayesParams};

/// Version written into model files; loading any other version fails.
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log P(positive | x)` from the two unnormalised log joints.
pub(crate) fn log_posterior_positive(log_joint: [f64; 2]) -> f64 {
    let m = log_joint[0].max(log_joint[1]);
    let lse = m + ((log_joint[0] - m).exp() + (log_joint[1] - m).exp()).ln();
    log_joint[1] - lse
}

/// `[P(negative | x), P(positive | x)]` from the two unnormalised log
/// joints, each normalised on its own (not as a complement).
pub(crate) fn class_posteriors(log_joint: [f64; 2]) -> [f64; 2] {
    let m = log_joint[0].max(log_joint[1]);
    let lse = m + ((log_joint[0] - m).exp() + (log_joint[1] - m).exp()).ln();
    log_joint.map(|l| (l - lse).exp())
}

/// `[negatives, positives]`; errors unless both classes are present.
pub(crate) fn class_counts(rows: &[EncounterVector]) -> Result<[usize; 2]> {
    let pos = rows.iter().filter(|r| r.label).count();
    let counts = [rows.len() - pos, pos];
    if counts.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "training rows need both classes (negatives {}, positives {})",
            counts[0], counts[1]
        )));
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    BayesNet,
    RandomForest,
    #[serde(rename = "adaboost")]
    AdaBoost,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::NaiveBayes,
        ModelKind::BayesNet,
        ModelKind::RandomForest,
        ModelKind::AdaBoost,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::BayesNet => "bayes_net",
            ModelKind::RandomForest => "random_forest",
            ModelKind::AdaBoost => "adaboost",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "Naive Bayes",
            ModelKind::BayesNet => "Bayesian network",
            ModelKind::RandomForest => "Random forest",
            ModelKind::AdaBoost => "AdaBoost",
            ModelKind::Mlp => "Multilayer perceptron",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "nb" => return Ok(ModelKind::NaiveBayes),
            "bn" | "tan" => return Ok(ModelKind::BayesNet),
            "rf" | "forest" => return Ok(ModelKind::RandomForest),
            "boost" | "ada" => return Ok(ModelKind::AdaBoost),
            "perceptron" => return Ok(ModelKind::Mlp),
            _ => {}
        }
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// A learner and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LearnerConfig {
    NaiveBayes(NaiveBayesParams),
    BayesNet(BayesNetParams),
    RandomForest(ForestParams),
    #[serde(rename = "adaboost")]
    AdaBoost(BoostParams),
    Mlp(MlpParams),
}

impl LearnerConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::NaiveBayes => Self::NaiveBayes(Default::default()),
            ModelKind::BayesNet => Self::BayesNet(Default::default()),
            ModelKind::RandomForest => Self::RandomForest(Default::default()),
            ModelKind::AdaBoost => Self::AdaBoost(Default::default()),
            ModelKind::Mlp => Self::Mlp(Default::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::NaiveBayes(_) => ModelKind::NaiveBayes,
            Self::BayesNet(_) => ModelKind::BayesNet,
            Self::RandomForest(_) => ModelKind::RandomForest,
            Self::AdaBoost(_) => ModelKind::AdaBoost,
            Self::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Rough model size, used to break cross-validation ties in favour of
    /// the simpler candidate.
    pub fn complexity(&self) -> usize {
        match self {
            Self::NaiveBayes(_) => 1,
            Self::BayesNet(p) => 2 * p.numeric_bins,
            Self::RandomForest(p) => p.n_trees << p.max_depth.min(30),
            Self::AdaBoost(p) => p.rounds << p.max_depth.min(30),
            Self::Mlp(p) => p.hidden,
        }
    }

    pub fn train(
        &self,
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        seed: u64,
    ) -> Result<Scorer> {
        check_rows(schema.fingerprint(), rows)?;
        let model = match self {
            Self::NaiveBayes(p) => Model::NaiveBayes(NaiveBayes::train(schema, rows, p)?),
            Self::BayesNet(p) => Model::BayesNet(BayesNet::train(schema, rows, p)?),
            Self::RandomForest(p) => {
                Model::RandomForest(RandomForest::train(schema, rows, p, seed)?)
            }
            Self::AdaBoost(p) => Model::AdaBoost(AdaBoost::train(schema, rows, p, seed)?),
            Self::Mlp(p) => Model::Mlp(Mlp::train(schema, rows, p, seed)?),
        };
        Ok(Scorer::new(schema.clone(), model))
    }
}

fn check_rows(expected: SchemaFingerprint, rows: &[EncounterVector]) -> Result<()> {
    match rows.iter().find(|r| r.fingerprint != expected) {
        Some(r) => Err(Error::SchemaMismatch {
            expected: expected.to_string(),
            found: r.fingerprint.to_string(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    NaiveBayes(NaiveBayes),
    BayesNet(BayesNet),
    RandomForest(RandomForest),
    #[serde(rename = "adaboost")]
    AdaBoost(AdaBoost),
    Mlp(Mlp),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::NaiveBayes(_) => ModelKind::NaiveBayes,
            Model::BayesNet(_) => ModelKind::BayesNet,
            Model::RandomForest(_) => ModelKind::RandomForest,
            Model::AdaBoost(_) => ModelKind::AdaBoost,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    fn score_unchecked(&self, x: &EncounterVector) -> f64 {
        match self {
            Model::NaiveBayes(m) => m.score(x),
            Model::BayesNet(m) => m.score(x),
            Model::RandomForest(m) => m.score(x),
            Model::AdaBoost(m) => m.score(x),
            Model::Mlp(m) => m.score(x),
        }
    }
}

/// A trained model bound to the schema it was fitted against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scorer {
    pub fingerprint: SchemaFingerprint,
    pub schema: FeatureSchema,
    pub model: Model,
}

impl Scorer {
    pub fn new(schema: FeatureSchema, model: Model) -> Self {
        Self {
            fingerprint: schema.fingerprint(),
            schema,
            model,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Positive-class score in `[0, 1]`.
    pub fn score(&self, x: &EncounterVector) -> Result<f64> {
        check_rows(self.fingerprint, std::slice::from_ref(x))?;
        let s = self.model.score_unchecked(x);
        if !s.is_finite() {
            return Err(Error::Numerical(format!(
                "{} produced a non-finite score for encounter {}",
                self.kind(),
                x.encounter_id
            )));
        }
        Ok(s)
    }

    pub fn score_all(&self, xs: &[EncounterVector]) -> Result<Vec<f64>> {
        check_rows(self.fingerprint, xs)?;
        xs.par_iter().map(|x| self.score(x)).collect()
    }

    /// `(score, label)` pairs ready for evaluation.
    pub fn scored(&self, xs: &[EncounterVector]) -> Result<Vec<(f64, bool)>> {
        Ok(self
            .score_all(xs)?
            .into_iter()
            .zip(xs)
            .map(|(s, x)| (s, x.label))
            .collect())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFileRef {
            format_version: MODEL_FORMAT_VERSION,
            scorer: self,
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(r)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Data("model file has no format_version".into()))?;
        if found != MODEL_FORMAT_VERSION as u64 {
            return Err(Error::ModelVersion {
                found: found as u32,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let scorer = file.scorer;
        let actual = scorer.schema.fingerprint();
        if actual != scorer.fingerprint {
            return Err(Error::SchemaMismatch {
                expected: scorer.fingerprint.to_string(),
                found: actual.to_string(),
            });
        }
        Ok(scorer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_json(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_json(BufReader::new(f))
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u32,
    scorer: &'a Scorer,
}

#[derive(Deserialize)]
struct ModelFile {
    #[allow(dead_code)]
    format_version: u32,
    scorer: Scorer,
}

//! Ablation feature importance from forest out-of-bag error.
//!
//! A forest is trained on all features to get the baseline OOB error, then
//! retrained once per feature with that feature withheld. A feature's
//! importance is how much the OOB error rises without it.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForestParams, RandomForest};
use crate::preprocess::{EncounterVector, FeatureSchema, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature: String,
    pub label: String,
    pub oob_error_without_feature: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub task: Task,
    pub rows_used: usize,
    /// Fraction of the supplied rows used, when subsampled.
    pub subsample: f64,
    pub baseline_oob_error: f64,
    /// One row per feature, in schema order.
    pub features: Vec<AblationRow>,
}

impl AblationReport {
    /// Rows by decreasing importance; ties keep schema order.
    pub fn ranked(&self) -> Vec<&AblationRow> {
        let mut v: Vec<&AblationRow> = self.features.iter().collect();
        v.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        v
    }

    /// 1-based rank of a feature by importance.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranked()
            .iter()
            .position(|r| r.feature == feature)
            .map(|p| p + 1)
    }

    pub fn write_csv<W: Write>(&self, w: W, ranked: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["feature", "label", "baseline", "ablated", "importance"])?;
        let rows: Vec<&AblationRow> = if ranked {
            self.ranked()
        } else {
            self.features.iter().collect()
        };
        for r in rows {
            wtr.write_record([
                r.feature.clone(),
                r.label.clone(),
                format!("{:.6}", self.baseline_oob_error),
                format!("{:.6}", r.oob_error_without_feature),
                format!("{:.6}", r.importance),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Data(format!("writing ablation report: {e}")))
    }
}

/// Deterministic subsample of `fraction` of the rows, in original order.
fn subsample(rows: &[EncounterVector], fraction: f64, seed: u64) -> Vec<EncounterVector> {
    if fraction >= 1.0 {
        return rows.to_vec();
    }
    let keep = ((rows.len() as f64 * fraction).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(keep);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Baseline plus one retrain per withheld feature, all with the same seed.
pub fn ablation_study(
    schema: &FeatureSchema,
    rows: &[EncounterVector],
    task: Task,
    params: &ForestParams,
    subsample_fraction: f64,
    seed: u64,
) -> Result<AblationReport> {
    if !(subsample_fraction > 0.0 && subsample_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ablation subsample must be in (0, 1], got {subsample_fraction}"
        )));
    }
    if schema.len() < 2 {
        return Err(Error::InvalidArgument(
            "ablation needs at least two features".into(),
        ));
    }
    let data = subsample(rows, subsample_fraction, seed);
    let n = schema.len();
    // run 0 is the baseline, run f + 1 withholds feature f
    let errors: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|run| {
            let mut active = vec![true; n];
            if run > 0 {
                active[run - 1] = false;
            }
            let forest = RandomForest::train_masked(schema, &data, params, &active, seed)?;
            let oob = forest.oob_error(&data)?;
            log::debug!("ablation run {run}: oob error {:.5}", oob.error);
            Ok(oob.error)
        })
        .collect::<Result<_>>()?;
    let baseline = errors[0];
    let features = schema
        .features
        .iter()
        .zip(&errors[1..])
        .map(|(f, &e)| AblationRow {
            feature: f.name.clone(),
            label: f.label.clone(),
            oob_error_without_feature: e,
            importance: e - baseline,
        })
        .collect();
    Ok(AblationReport {
        task,
        rows_used: data.len(),
        subsample: subsample_fraction,
        baseline_oob_error: baseline,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{mixed_schema, vectors};
    use rand::Rng;

    /// The label depends on feature 2 only; the others are noise.
    fn single_relevant(seed: u64) -> (FeatureSchema, Vec<EncounterVector>) {
        let schema = mixed_schema(&[4, 3], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<(Vec<f64>, bool)> = (0..1500)
            .map(|_| {
                let k: f64 = rng.random_range(0.0..10.0);
                let y = k + rng.random_range(-1.0..1.0) > 5.0;
                (
                    vec![
                        rng.random_range(0..3u32) as f64,
                        rng.random_range(0..2u32) as f64,
                        k,
                        rng.random_range(0.0..10.0),
                        rng.random_range(0.0..10.0),
                    ],
                    y,
                )
            })
            .collect();
        let rows = vectors(&schema, &xs);
        (schema, rows)
    }

    fn params() -> ForestParams {
        ForestParams {
            n_trees: 40,
            ..Default::default()
        }
    }

    #[test]
    fn relevant_feature_dominates_by_three_sigma() {
        let mut relevant = Vec::new();
        let mut best_other = Vec::new();
        for seed in 0..5 {
            let (schema, rows) = single_relevant(seed);
            let rep = ablation_study(&schema, &rows, Task::AnyReadmission, &params(), 1.0, seed).unwrap();
            assert_eq!(rep.features.len(), 5);
            assert_eq!(rep.ranked()[0].feature, "x2");
            relevant.push(rep.features[2].importance);
            best_other.push(
                rep.features
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != 2)
                    .map(|(_, r)| r.importance)
                    .fold(f64::MIN, f64::max),
            );
        }
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let sigma = sd(&relevant).max(sd(&best_other));
        for (r, o) in relevant.iter().zip(&best_other) {
            assert!(*r > o + 3.0 * sigma, "{r} vs {o} (sigma {sigma})");
        }
    }

    #[test]
    fn baseline_is_reproducible() {
        let (schema, rows) = single_relevant(9);
        let a = ablation_study(&schema, &rows, Task::Differentiate, &params(), 1.0, 3).unwrap();
        let b = ablation_study(&schema, &rows, Task::Differentiate, &params(), 1.0, 3).unwrap();
        assert_eq!(a.baseline_oob_error.to_bits(), b.baseline_oob_error.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_uses_fraction_of_rows() {
        let (schema, rows) = single_relevant(1);
        let rep = ablation_study(&schema, &rows, Task::AnyReadmission, &params(), 0.25, 3).unwrap();
        assert_eq!(rep.rows_used, 375);
        assert!(ablation_study(&schema, &rows, Task::AnyReadmission, &params(), 0.0, 3).is_err());
        let mut buf = Vec::new();
        rep.write_csv(&mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }
}

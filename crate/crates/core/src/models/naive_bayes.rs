//! Naive Bayes with smoothed categorical and Gaussian class conditionals.

use serde::{Deserialize, Serialize};

use super::{class_posteriors, class_counts, log_posterior_positive};
use crate::error::{Error, Result};
use crate::preprocess::{DescriptorKind, EncounterVector, FeatureSchema, FeatureValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesParams {
    /// Additive smoothing for nominal counts.
    pub smoothing: f64,
    /// Lower bound on Gaussian variances.
    pub variance_floor: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        Self {
            smoothing: 1.0,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditional {
    /// `log_prob[class][code]`.
    Categorical { log_prob: [Vec<f64>; 2] },
    Gaussian { mean: [f64; 2], variance: [f64; 2] },
}

impl Conditional {
    fn log_likelihood(&self, class: usize, v: FeatureValue) -> f64 {
        match (self, v) {
            (Conditional::Categorical { log_prob }, FeatureValue::Nominal(c)) => {
                log_prob[class][c as usize]
            }
            (Conditional::Gaussian { mean, variance }, FeatureValue::Numeric(x)) => {
                let var = variance[class];
                let d = x - mean[class];
                -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
            }
            _ => unreachable!("schema-checked"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub params: NaiveBayesParams,
    /// `[negative, positive]`.
    pub log_prior: [f64; 2],
    pub conditionals: Vec<Conditional>,
}

impl NaiveBayes {
    pub fn train(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &NaiveBayesParams,
    ) -> Result<Self> {
        let n_class = class_counts(rows)?;
        if params.smoothing < 0.0 || params.variance_floor <= 0.0 {
            return Err(Error::InvalidArgument(
                "smoothing must be >= 0 and the variance floor > 0".into(),
            ));
        }
        let n = rows.len() as f64;
        let log_prior = [
            (n_class[0] as f64 / n).ln(),
            (n_class[1] as f64 / n).ln(),
        ];
        let conditionals = schema
            .features
            .iter()
            .enumerate()
            .map(|(f, desc)| match &desc.kind {
                DescriptorKind::Nominal { values } => {
                    let k = values.len();
                    let mut counts = [vec![0.0; k], vec![0.0; k]];
                    for r in rows {
                        if let FeatureValue::Nominal(c) = r.values[f] {
                            counts[r.label as usize][c as usize] += 1.0;
                        }
                    }
                    let log_prob = [0, 1].map(|c| {
                        let denom = n_class[c] as f64 + params.smoothing * k as f64;
                        counts[c]
                            .iter()
                            .map(|&x| ((x + params.smoothing) / denom).ln())
                            .collect()
                    });
                    Conditional::Categorical { log_prob }
                }
                DescriptorKind::Numeric { .. } => {
                    let mut sum = [0.0; 2];
                    for r in rows {
                        sum[r.label as usize] += r.values[f].as_f64();
                    }
                    let mean = [0, 1].map(|c| sum[c] / n_class[c] as f64);
                    let mut ss = [0.0; 2];
                    for r in rows {
                        let d = r.values[f].as_f64() - mean[r.label as usize];
                        ss[r.label as usize] += d * d;
                    }
                    let variance =
                        [0, 1].map(|c| (ss[c] / n_class[c] as f64).max(params.variance_floor));
                    Conditional::Gaussian { mean, variance }
                }
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            log_prior,
            conditionals,
        })
    }

    /// Unnormalised log joint for each class.
    pub fn log_joint(&self, x: &EncounterVector) -> [f64; 2] {
        [0, 1].map(|c| {
            self.log_prior[c]
                + self
                    .conditionals
                    .iter()
                    .zip(&x.values)
                    .map(|(cond, v)| cond.log_likelihood(c, *v))
                    .sum::<f64>()
        })
    }

    /// Posterior `[P(negative | x), P(positive | x)]`.
    pub fn posterior(&self, x: &EncounterVector) -> [f64; 2] {
        class_posteriors(self.log_joint(x))
    }

    pub fn score(&self, x: &EncounterVector) -> f64 {
        log_posterior_positive(self.log_joint(x)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{mixed_schema, nominal_schema, numeric_schema, vectors};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn single_nominal_feature_hand_computed() {
        // feature values a=0, b=1, <other>=2; K = 3
        let schema = nominal_schema(&[3]);
        let xs = vec![
            (vec![0.0], true),
            (vec![0.0], true),
            (vec![1.0], true),
            (vec![0.0], false),
            (vec![1.0], false),
            (vec![1.0], false),
            (vec![1.0], false),
        ];
        let rows = vectors(&schema, &xs);
        let m = NaiveBayes::train(&schema, &rows, &NaiveBayesParams::default()).unwrap();
        // P(+)=3/7, P(a|+)=(2+1)/(3+3); P(-)=4/7, P(a|-)=(1+1)/(4+3)
        let pos = 3.0 / 7.0 * (3.0 / 6.0);
        let neg = 4.0 / 7.0 * (2.0 / 7.0);
        assert_abs_diff_eq!(m.score(&rows[0]), pos / (pos + neg), epsilon = 1e-12);
        // unseen bucket
        let unseen = vectors(&schema, &[(vec![2.0], true)]);
        let pos = 3.0 / 7.0 * (1.0 / 6.0);
        let neg = 4.0 / 7.0 * (1.0 / 7.0);
        assert_abs_diff_eq!(m.score(&unseen[0]), pos / (pos + neg), epsilon = 1e-12);
    }

    #[test]
    fn uninformative_features_give_prior() {
        let schema = numeric_schema(2);
        let xs: Vec<(Vec<f64>, bool)> = (0..10).map(|i| (vec![4.0, -1.0], i < 3)).collect();
        let rows = vectors(&schema, &xs);
        let m = NaiveBayes::train(&schema, &rows, &NaiveBayesParams::default()).unwrap();
        assert_abs_diff_eq!(m.score(&rows[0]), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_hand_computed() {
        let schema = numeric_schema(1);
        let xs = vec![
            (vec![1.0], true),
            (vec![3.0], true),
            (vec![0.0], false),
            (vec![2.0], false),
        ];
        let rows = vectors(&schema, &xs);
        let m = NaiveBayes::train(&schema, &rows, &NaiveBayesParams::default()).unwrap();
        // both classes have variance 1; means 2 and 1
        let x = vectors(&schema, &[(vec![2.5], true)]);
        let lp = -(2.5f64 - 2.0).powi(2) / 2.0;
        let ln = -(2.5f64 - 1.0).powi(2) / 2.0;
        let expected = 1.0 / (1.0 + (ln - lp).exp());
        assert_abs_diff_eq!(m.score(&x[0]), expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_single_class() {
        let schema = numeric_schema(1);
        let rows = vectors(&schema, &[(vec![1.0], true), (vec![2.0], true)]);
        assert!(NaiveBayes::train(&schema, &rows, &NaiveBayesParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn posterior_is_a_distribution(
            data in prop::collection::vec((0u32..3, -50.0f64..50.0, any::<bool>()), 4..60),
            probe in (0u32..4, -1e3f64..1e3),
        ) {
            let schema = mixed_schema(&[4], 1);
            let mut xs: Vec<(Vec<f64>, bool)> =
                data.iter().map(|(c, v, l)| (vec![*c as f64, *v], *l)).collect();
            xs.push((vec![0.0, 0.0], true));
            xs.push((vec![1.0, 1.0], false));
            let rows = vectors(&schema, &xs);
            let m = NaiveBayes::train(&schema, &rows, &NaiveBayesParams::default()).unwrap();
            let x = vectors(&schema, &[(vec![probe.0 as f64, probe.1], true)]);
            let p = m.posterior(&x[0]);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }
}

//! Tree-augmented naive Bayes.
//!
//! Numeric features are discretised into equal-frequency bins. Each feature
//! may take one other feature as an extra parent; the parent structure is a
//! maximum spanning forest over conditional mutual information given the
//! class. Edges with no information are left out, so independent features
//! reduce the model to naive Bayes.

use serde::{Deserialize, Serialize};

use super::{class_posteriors, class_counts, log_posterior_positive};
use crate::error::{Error, Result};
use crate::preprocess::{DescriptorKind, EncounterVector, FeatureSchema, FeatureValue};

/// Edges whose conditional mutual information does not exceed this are
/// omitted from the structure.
pub const MIN_EDGE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesNetParams {
    pub smoothing: f64,
    /// Equal-frequency bins per numeric feature.
    pub numeric_bins: usize,
}

impl Default for BayesNetParams {
    fn default() -> Self {
        Self {
            smoothing: 1.0,
            numeric_bins: 5,
        }
    }
}

/// Maps a feature value to a discrete state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretizer {
    Nominal { cardinality: usize },
    /// A value falls in the bin counting the cut points strictly below it.
    Cuts { cuts: Vec<f64> },
}

impl Discretizer {
    fn fit(values: &mut [f64], bins: usize) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mut cuts: Vec<f64> = (1..bins)
            .filter_map(|k| {
                let i = k * n / bins;
                (i > 0).then(|| values[i - 1])
            })
            .collect();
        cuts.dedup();
        // a cut at the maximum separates nothing
        if let Some(&max) = values.last() {
            cuts.retain(|&c| c < max);
        }
        Discretizer::Cuts { cuts }
    }

    pub fn states(&self) -> usize {
        match self {
            Discretizer::Nominal { cardinality } => *cardinality,
            Discretizer::Cuts { cuts } => cuts.len() + 1,
        }
    }

    pub fn state(&self, v: FeatureValue) -> usize {
        match (self, v) {
            (Discretizer::Nominal { .. }, FeatureValue::Nominal(c)) => c as usize,
            (Discretizer::Cuts { cuts }, FeatureValue::Numeric(x)) => {
                cuts.partition_point(|&c| c < x)
            }
            _ => unreachable!("schema-checked"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    pub parent: Option<usize>,
    /// `log_prob[class][parent_state * states + state]`; parent_state is 0
    /// for parentless nodes.
    pub log_prob: [Vec<f64>; 2],
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNet {
    pub params: BayesNetParams,
    pub discretizers: Vec<Discretizer>,
    pub log_prior: [f64; 2],
    pub nodes: Vec<NodeTable>,
    /// Conditional mutual information of each chosen `(parent, child)` edge.
    pub edges: Vec<(usize, usize, f64)>,
}

/// Discrete state of every row for every feature, row-major.
struct States {
    n_features: usize,
    data: Vec<u32>,
}

impl States {
    fn get(&self, row: usize, f: usize) -> usize {
        self.data[row * self.n_features + f] as usize
    }
}

/// I(X_i; X_j | C) from empirical frequencies.
fn conditional_mutual_information(
    states: &States,
    labels: &[bool],
    n_class: [usize; 2],
    (i, ki): (usize, usize),
    (j, kj): (usize, usize),
) -> f64 {
    let n = labels.len() as f64;
    let mut joint = vec![0u32; 2 * ki * kj];
    for (r, &y) in labels.iter().enumerate() {
        joint[(y as usize * ki + states.get(r, i)) * kj + states.get(r, j)] += 1;
    }
    let mut mi = 0.0;
    for c in 0..2 {
        let nc = n_class[c] as f64;
        let block = &joint[c * ki * kj..(c + 1) * ki * kj];
        let row: Vec<f64> = (0..ki)
            .map(|a| block[a * kj..(a + 1) * kj].iter().sum::<u32>() as f64)
            .collect();
        let col: Vec<f64> = (0..kj)
            .map(|b| (0..ki).map(|a| block[a * kj + b]).sum::<u32>() as f64)
            .collect();
        for a in 0..ki {
            for b in 0..kj {
                let nab = block[a * kj + b] as f64;
                if nab > 0.0 {
                    mi += nab / n * (nab * nc / (row[a] * col[b])).ln();
                }
            }
        }
    }
    mi.max(0.0)
}

/// Prim's algorithm on a dense weight matrix, restarting from the lowest
/// unvisited index whenever no informative edge remains. Returns the parent of
/// each node and the chosen edges.
fn maximum_spanning_forest(w: &[Vec<f64>]) -> (Vec<Option<usize>>, Vec<(usize, usize, f64)>) {
    let n = w.len();
    let mut parent = vec![None; n];
    let mut in_tree = vec![false; n];
    let mut edges = Vec::new();
    let mut visited = 0;
    while visited < n {
        let root = (0..n).find(|&v| !in_tree[v]).expect("unvisited node");
        in_tree[root] = true;
        visited += 1;
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for u in (0..n).filter(|&u| in_tree[u]) {
                for v in (0..n).filter(|&v| !in_tree[v]) {
                    let wt = w[u][v];
                    if wt > MIN_EDGE_WEIGHT && best.is_none_or(|(b, _, _)| wt > b) {
                        best = Some((wt, u, v));
                    }
                }
            }
            let Some((wt, u, v)) = best else { break };
            in_tree[v] = true;
            visited += 1;
            parent[v] = Some(u);
            edges.push((u, v, wt));
        }
    }
    (parent, edges)
}

impl BayesNet {
    pub fn train(
        schema: &FeatureSchema,
        rows: &[EncounterVector],
        params: &BayesNetParams,
    ) -> Result<Self> {
        let n_class = class_counts(rows)?;
        if params.smoothing < 0.0 || params.numeric_bins < 1 {
            return Err(Error::InvalidArgument(
                "smoothing must be >= 0 and numeric_bins >= 1".into(),
            ));
        }
        let discretizers: Vec<Discretizer> = schema
            .features
            .iter()
            .enumerate()
            .map(|(f, d)| match &d.kind {
                DescriptorKind::Nominal { values } => Discretizer::Nominal {
                    cardinality: values.len(),
                },
                DescriptorKind::Numeric { .. } => {
                    let mut v: Vec<f64> = rows.iter().map(|r| r.values[f].as_f64()).collect();
                    Discretizer::fit(&mut v, params.numeric_bins)
                }
            })
            .collect();
        let n_features = schema.len();
        let states = States {
            n_features,
            data: rows
                .iter()
                .flat_map(|r| {
                    discretizers
                        .iter()
                        .zip(&r.values)
                        .map(|(d, v)| d.state(*v) as u32)
                })
                .collect(),
        };
        let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
        let k: Vec<usize> = discretizers.iter().map(Discretizer::states).collect();

        let pairs: Vec<(usize, usize)> = (0..n_features)
            .flat_map(|i| (i + 1..n_features).map(move |j| (i, j)))
            .collect();
        use rayon::prelude::*;
        let weights: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| {
                conditional_mutual_information(&states, &labels, n_class, (i, k[i]), (j, k[j]))
            })
            .collect();
        let mut w = vec![vec![0.0; n_features]; n_features];
        for (&(i, j), &cmi) in pairs.iter().zip(&weights) {
            w[i][j] = cmi;
            w[j][i] = cmi;
        }
        let (parents, edges) = maximum_spanning_forest(&w);

        let a = params.smoothing;
        let nodes = (0..n_features)
            .map(|f| {
                let kf = k[f];
                let kp = parents[f].map_or(1, |p| k[p]);
                let mut counts = [vec![0.0; kp * kf], vec![0.0; kp * kf]];
                for (r, &y) in labels.iter().enumerate() {
                    let ps = parents[f].map_or(0, |p| states.get(r, p));
                    counts[y as usize][ps * kf + states.get(r, f)] += 1.0;
                }
                let log_prob = [0, 1].map(|c| {
                    let mut out = vec![0.0; kp * kf];
                    for ps in 0..kp {
                        let block = &counts[c][ps * kf..(ps + 1) * kf];
                        let total: f64 = block.iter().sum();
                        for s in 0..kf {
                            out[ps * kf + s] = ((block[s] + a) / (total + a * kf as f64)).ln();
                        }
                    }
                    out
                });
                NodeTable {
                    parent: parents[f],
                    log_prob,
                    states: kf,
                }
            })
            .collect();
        let n = rows.len() as f64;
        Ok(Self {
            params: params.clone(),
            discretizers,
            log_prior: [(n_class[0] as f64 / n).ln(), (n_class[1] as f64 / n).ln()],
            nodes,
            edges,
        })
    }

    pub fn log_joint(&self, x: &EncounterVector) -> [f64; 2] {
        let s: Vec<usize> = self
            .discretizers
            .iter()
            .zip(&x.values)
            .map(|(d, v)| d.state(*v))
            .collect();
        [0, 1].map(|c| {
            self.log_prior[c]
                + self
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(f, node)| {
                        let ps = node.parent.map_or(0, |p| s[p]);
                        node.log_prob[c][ps * node.states + s[f]]
                    })
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

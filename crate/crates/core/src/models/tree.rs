//! Weighted binary decision trees on Gini impurity.
//!
//! Shared by the forest (bootstrap multiplicities as weights) and by
//! boosting (example weights). Numeric columns are pre-binned on their
//! distinct training values, so split search is a histogram scan. Nominal
//! splits send a set of categories left; for two classes the best set is a
//! prefix of the categories ordered by positive rate.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::{DescriptorKind, EncounterVector, FeatureSchema, FeatureValue};

/// Numeric features with more distinct values than this are quantile-binned.
pub const MAX_BINS: usize = 1024;

#[derive(Debug, Clone)]
pub(crate) enum Column {
    Nominal { codes: Vec<u32>, cardinality: usize },
    Numeric { bins: Vec<u32>, edges: Vec<f64> },
}

impl Column {
    fn width(&self) -> usize {
        match self {
            Column::Nominal { cardinality, .. } => *cardinality,
            Column::Numeric { edges, .. } => edges.len(),
        }
    }

    fn bin(&self, row: usize) -> usize {
        match self {
            Column::Nominal { codes, .. } => codes[row] as usize,
            Column::Numeric { bins, .. } => bins[row] as usize,
        }
    }
}

/// Column-major, binned copy of a training set.
#[derive(Debug, Clone)]
pub(crate) struct Columns {
    pub n_rows: usize,
    pub columns: Vec<Column>,
    pub labels: Vec<bool>,
}

impl Columns {
    pub fn new(schema: &FeatureSchema, rows: &[EncounterVector]) -> Self {
        let columns = schema
            .features
            .iter()
            .enumerate()
            .map(|(f, desc)| match &desc.kind {
                DescriptorKind::Nominal { values } => Column::Nominal {
                    codes: rows
                        .iter()
                        .map(|r| match r.values[f] {
                            FeatureValue::Nominal(c) => c,
                            FeatureValue::Numeric(_) => unreachable!("schema-checked"),
                        })
                        .collect(),
                    cardinality: values.len(),
                },
                DescriptorKind::Numeric { .. } => {
                    let vals: Vec<f64> = rows.iter().map(|r| r.values[f].as_f64()).collect();
                    let edges = bin_edges(&vals);
                    let bins = vals
                        .iter()
                        .map(|v| bin_of(&edges, *v) as u32)
                        .collect();
                    Column::Numeric { bins, edges }
                }
            })
            .collect();
        Self {
            n_rows: rows.len(),
            columns,
            labels: rows.iter().map(|r| r.label).collect(),
        }
    }
}

/// Sorted distinct values, or evenly spaced order statistics when there are
/// more than [`MAX_BINS`] of them.
fn bin_edges(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() <= MAX_BINS {
        return sorted;
    }
    let mut all = values.to_vec();
    all.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..=MAX_BINS)
        .map(|k| all[(k * all.len() / MAX_BINS).min(all.len()) - 1])
        .collect();
    edges.dedup();
    edges
}

/// Number of edges strictly below `v`, clamped to the last bin.
fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e < v).min(edges.len() - 1)
}

/// Fixed-width bitset over nominal codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet(Vec<u64>);

impl CategorySet {
    fn with_capacity(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, c: usize) {
        self.0[c / 64] |= 1 << (c % 64);
    }

    pub fn contains(&self, c: usize) -> bool {
        self.0.get(c / 64).is_some_and(|w| w & (1 << (c % 64)) != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTest {
    /// Left when the numeric value is `<=` the threshold.
    AtMost(f64),
    /// Left when the nominal code is in the set.
    In(CategorySet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Weighted positive fraction of the training rows reaching the leaf.
        positive: f64,
    },
    Split {
        feature: u16,
        test: SplitTest,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Positive fraction of the leaf reached by `x`.
    pub fn leaf_positive(&self, x: &EncounterVector) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { positive } => return *positive,
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let go_left = match (test, x.values[*feature as usize]) {
                        (SplitTest::AtMost(t), FeatureValue::Numeric(v)) => v <= *t,
                        (SplitTest::In(set), FeatureValue::Nominal(c)) => set.contains(c as usize),
                        _ => false,
                    };
                    i = if go_left { *left } else { *right } as usize;
                }
            }
        }
    }

    /// Majority vote of the reached leaf; ties vote negative.
    pub fn predict(&self, x: &EncounterVector) -> bool {
        self.leaf_positive(x) > 0.5
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Features drawn per node; `None` uses every active feature.
    pub features_per_split: Option<usize>,
    /// Per-feature availability; `false` removes a feature from every split.
    pub active: Vec<bool>,
}

struct Builder<'a, R> {
    cols: &'a Columns,
    weights: &'a [f64],
    params: &'a TreeParams,
    active: Vec<usize>,
    rng: &'a mut R,
    nodes: Vec<Node>,
    hist: Vec<(f64, f64)>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    test: SplitTest,
}

const MIN_GAIN: f64 = 1e-12;

fn gini_mass(w: f64, wp: f64) -> f64 {
    // w * gini(p) with gini = 2p(1-p)
    if w <= 0.0 {
        0.0
    } else {
        2.0 * wp * (w - wp) / w
    }
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, idx: Vec<u32>, depth: usize) -> u32 {
        let (w, wp) = idx.iter().fold((0.0, 0.0), |(w, wp), &i| {
            let wi = self.weights[i as usize];
            (w + wi, if self.cols.labels[i as usize] { wp + wi } else { wp })
        });
        let slot = self.nodes.len() as u32;
        let positive = if w > 0.0 { wp / w } else { 0.0 };
        self.nodes.push(Node::Leaf { positive });
        let pure = wp <= 0.0 || wp >= w;
        if depth >= self.params.max_depth || pure || idx.len() < 2 {
            return slot;
        }
        let Some(best) = self.best_split(&idx, w, wp) else {
            return slot;
        };
        let col = &self.cols.columns[best.feature];
        let (l, r): (Vec<u32>, Vec<u32>) = idx.into_iter().partition(|&i| {
            let b = col.bin(i as usize);
            match (&best.test, col) {
                (SplitTest::AtMost(t), Column::Numeric { edges, .. }) => edges[b] <= *t,
                (SplitTest::In(set), Column::Nominal { .. }) => set.contains(b),
                _ => unreachable!(),
            }
        });
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot as usize] = Node::Split {
            feature: best.feature as u16,
            test: best.test,
            left,
            right,
        };
        slot
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let n = self.active.len();
        match self.params.features_per_split {
            Some(k) if k < n => {
                let mut picked: Vec<usize> = sample(self.rng, n, k)
                    .into_iter()
                    .map(|j| self.active[j])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => self.active.clone(),
        }
    }

    fn best_split(&mut self, idx: &[u32], w: f64, wp: f64) -> Option<Candidate> {
        let parent = gini_mass(w, wp);
        let mut best: Option<Candidate> = None;
        for f in self.candidate_features() {
            let col = &self.cols.columns[f];
            self.hist.clear();
            self.hist.resize(col.width(), (0.0, 0.0));
            for &i in idx {
                let wi = self.weights[i as usize];
                let h = &mut self.hist[col.bin(i as usize)];
                h.0 += wi;
                if self.cols.labels[i as usize] {
                    h.1 += wi;
                }
            }
            let found = match col {
                Column::Numeric { edges, .. } => scan_numeric(&self.hist, edges, w, wp, parent),
                Column::Nominal { .. } => scan_nominal(&self.hist, w, wp, parent),
            };
            if let Some((gain, test)) = found {
                let better = match &best {
                    None => gain > MIN_GAIN * w.max(1.0),
                    Some(b) => gain > b.gain + MIN_GAIN * w.max(1.0),
                };
                if better {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        test,
                    });
                }
            }
        }
        best
    }
}

/// Best `x <= edge` split; the lowest threshold wins ties.
fn scan_numeric(
    hist: &[(f64, f64)],
    edges: &[f64],
    w: f64,
    wp: f64,
    parent: f64,
) -> Option<(f64, SplitTest)> {
    let (mut lw, mut lp) = (0.0, 0.0);
    let mut best: Option<(f64, usize)> = None;
    for (b, &(hw, hp)) in hist.iter().enumerate() {
        if hw <= 0.0 {
            continue;
        }
        lw += hw;
        lp += hp;
        let rw = w - lw;
        if rw <= 1e-12 * w {
            break;
        }
        let gain = parent - gini_mass(lw, lp) - gini_mass(rw, wp - lp);
        if best.is_none_or(|(g, _)| gain > g + MIN_GAIN * w.max(1.0)) {
            best = Some((gain, b));
        }
    }
    best.map(|(g, b)| (g, SplitTest::AtMost(edges[b])))
}

/// Best category-set split: categories ordered by positive rate (then code),
/// prefixes go left.
fn scan_nominal(hist: &[(f64, f64)], w: f64, wp: f64, parent: f64) -> Option<(f64, SplitTest)> {
    let mut present: Vec<usize> = (0..hist.len()).filter(|&c| hist[c].0 > 0.0).collect();
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|&a, &b| {
        let ra = hist[a].1 / hist[a].0;
        let rb = hist[b].1 / hist[b].0;
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let (mut lw, mut lp) = (0.0, 0.0);
    let mut best: Option<(f64, usize)> = None;
    for (k, &c) in present[..present.len() - 1].iter().enumerate() {
        lw += hist[c].0;
        lp += hist[c].1;
        let gain = parent - gini_mass(lw, lp) - gini_mass(w - lw, wp - lp);
        if best.is_none_or(|(g, _)| gain > g + MIN_GAIN * w.max(1.0)) {
            best = Some((gain, k));
        }
    }
    best.map(|(g, k)| {
        let mut set = CategorySet::with_capacity(hist.len());
        for &c in &present[..=k] {
            set.insert(c);
        }
        (g, SplitTest::In(set))
    })
}

/// Grow one tree on the rows with positive weight.
pub(crate) fn grow<R: Rng>(
    cols: &Columns,
    weights: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> DecisionTree {
    debug_assert_eq!(weights.len(), cols.n_rows);
    let idx: Vec<u32> = (0..cols.n_rows as u32)
        .filter(|&i| weights[i as usize] > 0.0)
        .collect();
    let active: Vec<usize> = (0..cols.columns.len()).filter(|&f| params.active[f]).collect();
    let mut b = Builder {
        cols,
        weights,
        params,
        active,
        rng,
        nodes: Vec::new(),
        hist: Vec::new(),
    };
    if idx.is_empty() {
        return DecisionTree {
            nodes: vec![Node::Leaf { positive: 0.0 }],
        };
    }
    b.build(idx, 0);
    DecisionTree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{numeric_schema, vectors};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: usize, n: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            features_per_split: None,
            active: vec![true; n],
        }
    }

    #[test]
    fn stump_on_threshold_data() {
        let schema = numeric_schema(1);
        let xs: Vec<(Vec<f64>, bool)> = (0..20).map(|i| (vec![i as f64], i >= 12)).collect();
        let rows = vectors(&schema, &xs);
        let cols = Columns::new(&schema, &rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = grow(&cols, &vec![1.0; 20], &params(1, 1), &mut rng);
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                test: SplitTest::AtMost(11.0),
                left: 1,
                right: 2
            }
        );
        assert!(rows.iter().all(|r| t.predict(r) == r.label));
    }

    #[test]
    fn nominal_set_split() {
        let schema = crate::models::testutil::nominal_schema(&[4]);
        // categories 0 and 2 positive, 1 and 3 negative
        let xs: Vec<(Vec<f64>, bool)> = (0..40)
            .map(|i| (vec![(i % 4) as f64], i % 4 == 0 || i % 4 == 2))
            .collect();
        let rows = vectors(&schema, &xs);
        let cols = Columns::new(&schema, &rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = grow(&cols, &vec![1.0; 40], &params(3, 1), &mut rng);
        assert_eq!(t.depth(), 1);
        assert!(rows.iter().all(|r| t.predict(r) == r.label));
    }

    #[test]
    fn zero_weight_rows_ignored() {
        let schema = numeric_schema(1);
        let xs: Vec<(Vec<f64>, bool)> = (0..10).map(|i| (vec![i as f64], i % 2 == 0)).collect();
        let rows = vectors(&schema, &xs);
        let cols = Columns::new(&schema, &rows);
        let w: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = grow(&cols, &w, &params(3, 1), &mut rng);
        assert_eq!(t.nodes, vec![Node::Leaf { positive: 1.0 }]);
    }

    #[test]
    fn inactive_feature_never_used() {
        let schema = numeric_schema(2);
        let xs: Vec<(Vec<f64>, bool)> = (0..30)
            .map(|i| (vec![i as f64, ((i * 7) % 11) as f64], i >= 15))
            .collect();
        let rows = vectors(&schema, &xs);
        let cols = Columns::new(&schema, &rows);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TreeParams {
            max_depth: 4,
            features_per_split: None,
            active: vec![false, true],
        };
        let t = grow(&cols, &vec![1.0; 30], &p, &mut rng);
        assert!(t
            .nodes
            .iter()
            .all(|n| !matches!(n, Node::Split { feature: 0, .. })));
    }

    #[test]
    fn quantile_edges_when_many_values() {
        let vals: Vec<f64> = (0..5000).map(|i| i as f64 * 0.5).collect();
        let edges = bin_edges(&vals);
        assert!(edges.len() <= MAX_BINS);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*edges.last().unwrap(), 2499.5);
        for &v in &vals[..50] {
            let b = bin_of(&edges, v);
            assert!(v <= edges[b]);
            assert!(b == 0 || v > edges[b - 1]);
        }
    }
}

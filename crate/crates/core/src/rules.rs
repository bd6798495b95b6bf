//! Frequent itemsets over nominal features and their readmission mix.
//!
//! An item is `feature=value`. Itemsets never hold two values of the same
//! feature. Mining is level-wise Apriori: size-k candidates join two
//! frequent (k-1)-sets sharing a prefix, are pruned unless every
//! (k-1)-subset is frequent, and are counted with bitset intersections.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Readmitted;
use crate::preprocess::{FeatureRow, Kind, FEATURES};

pub const DEFAULT_MIN_SUPPORT: usize = 100;
pub const DEFAULT_MAX_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub feature: String,
    pub value: String,
}

impl std::fmt::Display for Item {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.feature, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSet {
    /// Sorted by item id (feature order, then value).
    pub items: Vec<Item>,
    pub support: usize,
}

impl ItemSet {
    pub fn label(&self) -> String {
        self.items
            .iter()
            .map(Item::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Which encounters to mine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    Within30,
    After30,
    No,
    /// Readmitted at any time.
    Readmitted,
}

impl ClassFilter {
    pub fn matches(self, r: Readmitted) -> bool {
        match self {
            ClassFilter::Within30 => r == Readmitted::Within30,
            ClassFilter::After30 => r == Readmitted::After30,
            ClassFilter::No => r == Readmitted::No,
            ClassFilter::Readmitted => r != Readmitted::No,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassFilter::Within30 => "<30",
            ClassFilter::After30 => ">30",
            ClassFilter::No => "NO",
            ClassFilter::Readmitted => "readmitted",
        }
    }
}

type Bits = Vec<u64>;

fn and_into(acc: &mut [u64], other: &[u64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a &= b);
}

fn popcount(b: &[u64]) -> usize {
    b.iter().map(|w| w.count_ones() as usize).sum()
}

/// Encounters as item-id sets, with a vertical bitset index.
#[derive(Debug, Clone)]
pub struct Transactions {
    items: Vec<Item>,
    /// Group (feature) of each item; items of one group are exclusive.
    group: Vec<usize>,
    outcomes: Vec<Readmitted>,
    /// Rows containing each item.
    columns: Vec<Bits>,
}

impl Transactions {
    /// Build from rows of `(feature, value)` pairs. Items are numbered in
    /// first-seen feature order, then by value.
    pub fn new(rows: &[Vec<(String, String)>], outcomes: Vec<Readmitted>) -> Result<Self> {
        if rows.len() != outcomes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} transactions but {} outcomes",
                rows.len(),
                outcomes.len()
            )));
        }
        let mut features: Vec<String> = Vec::new();
        let mut by_feature: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for row in rows {
            for (f, v) in row {
                let fi = match features.iter().position(|x| x == f) {
                    Some(i) => i,
                    None => {
                        features.push(f.clone());
                        features.len() - 1
                    }
                };
                by_feature.entry(fi).or_default().push(v.clone());
            }
        }
        let mut items = Vec::new();
        let mut group = Vec::new();
        for (fi, mut values) in by_feature {
            values.sort();
            values.dedup();
            for v in values {
                items.push(Item {
                    feature: features[fi].clone(),
                    value: v,
                });
                group.push(fi);
            }
        }
        let words = rows.len().div_ceil(64);
        let mut columns = vec![vec![0u64; words]; items.len()];
        let lookup: BTreeMap<(&str, &str), usize> = items
            .iter()
            .enumerate()
            .map(|(i, it)| ((it.feature.as_str(), it.value.as_str()), i))
            .collect();
        for (r, row) in rows.iter().enumerate() {
            let mut seen = HashSet::new();
            for (f, v) in row {
                if !seen.insert(f) {
                    return Err(Error::InvalidArgument(format!(
                        "transaction {r} has two values for {f}"
                    )));
                }
                let i = lookup[&(f.as_str(), v.as_str())];
                columns[i][r / 64] |= 1 << (r % 64);
            }
        }
        Ok(Self {
            items,
            group,
            outcomes,
            columns,
        })
    }

    /// One transaction per encounter over the nominal features.
    pub fn from_feature_rows(rows: &[FeatureRow]) -> Result<Self> {
        let nominal: Vec<usize> = FEATURES
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == Kind::Nominal)
            .map(|(i, _)| i)
            .collect();
        let tx: Vec<Vec<(String, String)>> = rows
            .iter()
            .map(|r| {
                nominal
                    .iter()
                    .map(|&i| (FEATURES[i].column.to_string(), r.values[i].to_string()))
                    .collect()
            })
            .collect();
        Self::new(&tx, rows.iter().map(|r| r.readmitted).collect())
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    fn item_id(&self, item: &Item) -> Option<usize> {
        self.items.iter().position(|i| i == item)
    }

    fn row_mask(&self, class: Option<ClassFilter>) -> Bits {
        let mut mask = vec![0u64; self.len().div_ceil(64)];
        for (r, o) in self.outcomes.iter().enumerate() {
            if class.is_none_or(|c| c.matches(*o)) {
                mask[r / 64] |= 1 << (r % 64);
            }
        }
        mask
    }

    fn cover(&self, ids: &[usize], mask: &[u64]) -> Bits {
        let mut acc = mask.to_vec();
        for &i in ids {
            and_into(&mut acc, &self.columns[i]);
        }
        acc
    }
}

fn mine(tx: &Transactions, mask: &[u64], min_support: usize, max_len: usize) -> Result<Vec<ItemSet>> {
    if min_support == 0 {
        return Err(Error::InvalidArgument("min_support must be at least 1".into()));
    }
    let mut frequent: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut level: Vec<(Vec<usize>, usize)> = (0..tx.items.len())
        .into_par_iter()
        .map(|i| (vec![i], popcount(&tx.cover(&[i], mask))))
        .filter(|(_, s)| *s >= min_support)
        .collect();
    let mut k = 1;
    while !level.is_empty() && k < max_len {
        frequent.extend(level.iter().cloned());
        let known: HashSet<&[usize]> = level.iter().map(|(s, _)| s.as_slice()).collect();
        // group by shared (k-1)-prefix; level is sorted lexicographically
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..=level.len() {
            if i == level.len() || level[i].0[..k - 1] != level[start].0[..k - 1] {
                groups.push((start, i));
                start = i;
            }
        }
        let next: Vec<Vec<(Vec<usize>, usize)>> = groups
            .par_iter()
            .flat_map_iter(|&(a, b)| {
                let block = &level[a..b];
                (0..block.len()).map(move |x| (block, x))
            })
            .map(|(block, x)| {
                let base = &block[x].0;
                let prefix_bits = tx.cover(base, mask);
                let mut out = Vec::new();
                for (other, _) in &block[x + 1..] {
                    let last = other[k - 1];
                    if base.iter().any(|&i| tx.group[i] == tx.group[last]) {
                        continue;
                    }
                    let mut cand = base.clone();
                    cand.push(last);
                    // downward closure: every k-subset must be frequent
                    let pruned = (0..k - 1).any(|drop| {
                        let sub: Vec<usize> = cand
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != drop)
                            .map(|(_, v)| *v)
                            .collect();
                        !known.contains(sub.as_slice())
                    });
                    if pruned {
                        continue;
                    }
                    let support = prefix_bits
                        .iter()
                        .zip(&tx.columns[last])
                        .map(|(a, b)| (a & b).count_ones() as usize)
                        .sum();
                    if support >= min_support {
                        out.push((cand, support));
                    }
                }
                out
            })
            .collect();
        level = next.into_iter().flatten().collect();
        level.sort();
        k += 1;
    }
    frequent.extend(level);
    frequent.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    Ok(frequent
        .into_iter()
        .map(|(ids, support)| ItemSet {
            items: ids.iter().map(|&i| tx.items[i].clone()).collect(),
            support,
        })
        .collect())
}

/// Every itemset of at most `max_len` items present in at least
/// `min_support` transactions, ordered by size and then item ids.
pub fn mine_frequent(tx: &Transactions, min_support: usize, max_len: usize) -> Result<Vec<ItemSet>> {
    mine(tx, &tx.row_mask(None), min_support, max_len)
}

/// Apriori restricted to the encounters of one outcome class; supports
/// count only those encounters.
pub fn mine_class_sensitive(
    tx: &Transactions,
    class: ClassFilter,
    min_support: usize,
    max_len: usize,
) -> Result<Vec<ItemSet>> {
    let mask = tx.row_mask(Some(class));
    if popcount(&mask) == 0 {
        return Err(Error::Data(format!("no encounters in class {}", class.name())));
    }
    mine(tx, &mask, min_support, max_len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRuleStats {
    pub itemset: Vec<Item>,
    /// Encounters of any class matching every item.
    pub total_matches: usize,
    pub fraction_lt30: f64,
    pub fraction_gt30: f64,
    pub fraction_no: f64,
    /// Support within the mined class divided by `total_matches`, when the
    /// itemset came from class-restricted mining.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Match counts and outcome mix of each itemset over all transactions,
/// sorted ascending by the `<30` fraction, then by total matches
/// (descending) and the itemset label.
pub fn class_stats(tx: &Transactions, itemsets: &[ItemSet], mined_class: Option<ClassFilter>) -> Vec<ClassRuleStats> {
    let all = tx.row_mask(None);
    let class_masks: Vec<Bits> = Readmitted::ALL
        .iter()
        .map(|r| {
            let mut m = vec![0u64; all.len()];
            for (i, o) in tx.outcomes.iter().enumerate() {
                if o == r {
                    m[i / 64] |= 1 << (i % 64);
                }
            }
            m
        })
        .collect();
    let mut out: Vec<ClassRuleStats> = itemsets
        .par_iter()
        .filter_map(|set| {
            let ids: Option<Vec<usize>> = set.items.iter().map(|i| tx.item_id(i)).collect();
            let cover = tx.cover(&ids?, &all);
            let total = popcount(&cover);
            if total == 0 {
                return None;
            }
            let per: Vec<usize> = class_masks
                .iter()
                .map(|m| {
                    cover
                        .iter()
                        .zip(m)
                        .map(|(a, b)| (a & b).count_ones() as usize)
                        .sum()
                })
                .collect();
            let frac = |c: usize| per[c] as f64 / total as f64;
            Some(ClassRuleStats {
                itemset: set.items.clone(),
                total_matches: total,
                fraction_lt30: frac(Readmitted::Within30.index()),
                fraction_gt30: frac(Readmitted::After30.index()),
                fraction_no: frac(Readmitted::No.index()),
                confidence: mined_class.map(|_| set.support as f64 / total as f64),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.fraction_lt30
            .total_cmp(&b.fraction_lt30)
            .then(b.total_matches.cmp(&a.total_matches))
            .then_with(|| a.itemset.cmp(&b.itemset))
    });
    out
}

/// CSV in the shape of the published rule tables.
pub fn write_rules_csv<W: Write>(w: W, stats: &[ClassRuleStats]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["itemset", "pct_lt30", "pct_gt30", "pct_no", "total_matches"])?;
    for s in stats {
        let label = s
            .itemset
            .iter()
            .map(Item::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        wtr.write_record([
            label,
            format!("{:.2}", 100.0 * s.fraction_lt30),
            format!("{:.2}", 100.0 * s.fraction_gt30),
            format!("{:.2}", 100.0 * s.fraction_no),
            s.total_matches.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Data(format!("writing rules: {e}")))
}

//! Confusion matrices, precision/recall and precision-recall curves.
//!
//! The curve area is average precision: the sum over distinct thresholds of
//! `(recall_k - recall_{k-1}) * precision_k`. Points are never linearly
//! interpolated, since straight lines in PR space overstate achievable
//! precision. Tied scores share one threshold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn check_scores(scores: &[(f64, bool)]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scored instances".into()));
    }
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {s}")));
    }
    Ok(())
}

/// Predicted positive iff `score >= threshold`.
pub fn confusion(scores: &[(f64, bool)], threshold: f64) -> Result<ConfusionMatrix> {
    check_scores(scores)?;
    let mut cm = ConfusionMatrix::default();
    for &(s, y) in scores {
        match (s >= threshold, y) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// `tp / (tp + fp)`; 1.0 when nothing is predicted positive.
pub fn precision(cm: &ConfusionMatrix) -> f64 {
    let denom = cm.tp + cm.fp;
    if denom == 0 {
        1.0
    } else {
        cm.tp as f64 / denom as f64
    }
}

pub fn recall(cm: &ConfusionMatrix) -> Result<f64> {
    let denom = cm.tp + cm.fn_;
    if denom == 0 {
        return Err(Error::InvalidArgument(
            "recall is undefined without ground-truth positives".into(),
        ));
    }
    Ok(cm.tp as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, thresholds descending.
    pub points: Vec<PrPoint>,
    pub area: f64,
    pub positives: u64,
    pub negatives: u64,
}

impl PrCurve {
    /// Positive fraction; the area a label-independent scorer approaches.
    pub fn prevalence(&self) -> f64 {
        self.positives as f64 / (self.positives + self.negatives) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["threshold", "recall", "precision"])?;
        for p in &self.points {
            wtr.write_record([
                p.threshold.to_string(),
                p.recall.to_string(),
                p.precision.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<pr curve>", e))?;
        Ok(())
    }
}

/// Sort by score descending; stable so equal scores keep input order.
pub(crate) fn sorted_desc(scores: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

pub fn pr_curve(scores: &[(f64, bool)]) -> Result<PrCurve> {
    check_scores(scores)?;
    let positives = scores.iter().filter(|(_, y)| *y).count() as u64;
    let negatives = scores.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "precision-recall curve needs both classes".into(),
        ));
    }
    let sorted = sorted_desc(scores);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold,
            recall,
            precision,
        });
    }
    Ok(PrCurve {
        points,
        area,
        positives,
        negatives,
    })
}

pub fn auprc(scores: &[(f64, bool)]) -> Result<f64> {
    pr_curve(scores).map(|c| c.area)
}

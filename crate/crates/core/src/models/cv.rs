//! Hyperparameter selection by five-fold cross-validated AUPRC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnerConfig;
use crate::error::{Error, Result};
use crate::eval::auprc;
use crate::preprocess::TaskData;

/// Mean fold scores closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCandidate {
    pub config: LearnerConfig,
    pub fold_auprc: Vec<f64>,
    pub mean_auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub candidates: Vec<CvCandidate>,
    /// Index into `candidates` of the selected configuration.
    pub selected: usize,
}

impl CvReport {
    pub fn best(&self) -> &CvCandidate {
        &self.candidates[self.selected]
    }
}

/// Train every candidate on four folds and score the fifth, for each fold.
/// The highest mean AUPRC wins; near-ties go to the lower complexity, then to
/// the earlier candidate.
pub fn cross_validate(
    candidates: &[LearnerConfig],
    data: &TaskData,
    seed: u64,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate configurations".into()));
    }
    let k = data.split.cv_folds.len();
    let folds: Vec<_> = (0..k).map(|f| data.fold(f)).collect();
    for (f, (_, held)) in folds.iter().enumerate() {
        let pos = held.iter().filter(|r| r.label).count();
        if pos == 0 || pos == held.len() {
            return Err(Error::Data(format!(
                "cross-validation fold {f} has a single class"
            )));
        }
    }
    let mut out = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let fold_auprc = folds
            .par_iter()
            .map(|(fit, held)| {
                let scorer = cfg.train(&data.schema, fit, seed)?;
                auprc(&scorer.scored(held)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_auprc = fold_auprc.iter().sum::<f64>() / k as f64;
        log::info!("cv {}: mean AUPRC {mean_auprc:.4}", cfg.kind());
        out.push(CvCandidate {
            config: cfg.clone(),
            fold_auprc,
            mean_auprc,
        });
    }
    let mut selected = 0;
    for (i, c) in out.iter().enumerate().skip(1) {
        let b = &out[selected];
        let better = c.mean_auprc > b.mean_auprc + TIE_TOLERANCE
            || ((c.mean_auprc - b.mean_auprc).abs() <= TIE_TOLERANCE
                && c.config.complexity() < b.config.complexity());
        if better {
            selected = i;
        }
    }
    Ok(CvReport {
        candidates: out,
        selected,
    })
}

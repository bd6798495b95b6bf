//! Turning raw encounters into labelled, schema-encoded feature vectors.
//!
//! The steps, in order: drop rows with missing race or diagnoses, drop the
//! sparsely recorded columns (weight, payer code, medical specialty), keep
//! insulin as the only medication, group diagnosis codes, then fit a schema
//! on training rows and encode every row against it.

pub mod icd9;
pub mod schema;
pub mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_missing, RawEncounter, Readmitted, COLUMNS, MEDICATION_COLUMNS};

pub use icd9::{group_icd9, DiagnosisGroup, Grouping};
pub use schema::{
    encode_onehot, feature_index, DescriptorKind, EncounterVector, FeatureDescriptor, FeatureRow, FeatureSchema,
    FeatureSpec, FeatureValue, Kind, OneHotEncoder, RawValue, SchemaFingerprint, Unit, FEATURES,
    FEATURE_COUNT,
    OTHER_BUCKET,
};
pub use split::{make_split, SplitPlan};

/// Binary labelling of the three readmission outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// `<30` against `>30` and `NO`.
    ShortTerm,
    /// `<30` or `>30` against `NO`. Also used as the high-risk ablation task.
    AnyReadmission,
    /// `<30` against `>30`; `NO` encounters are excluded.
    Differentiate,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::ShortTerm, Task::AnyReadmission, Task::Differentiate];

    pub fn name(self) -> &'static str {
        match self {
            Task::ShortTerm => "short_term",
            Task::AnyReadmission => "any_readmission",
            Task::Differentiate => "differentiate",
        }
    }

    pub fn positive_definition(self) -> &'static str {
        match self {
            Task::ShortTerm => "readmitted == \"<30\"",
            Task::AnyReadmission => "readmitted in {\"<30\", \">30\"}",
            Task::Differentiate => "readmitted == \"<30\" among readmitted encounters",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "short_term" | "lt30" => Ok(Task::ShortTerm),
            "any_readmission" | "high_risk" => Ok(Task::AnyReadmission),
            "differentiate" => Ok(Task::Differentiate),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// Binary label for `task`, or `None` when the encounter is outside the task.
pub fn label(readmitted: Readmitted, task: Task) -> Option<bool> {
    match task {
        Task::ShortTerm => Some(readmitted == Readmitted::Within30),
        Task::AnyReadmission => Some(readmitted != Readmitted::No),
        Task::Differentiate => match readmitted {
            Readmitted::No => None,
            r => Some(r == Readmitted::Within30),
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub missing_race: usize,
    pub missing_diagnosis: usize,
    /// Rows missing both race and at least one diagnosis.
    pub missing_both: usize,
}

/// Remove encounters with missing race or any missing diagnosis.
pub fn filter_rows(raw: Vec<RawEncounter>) -> (Vec<RawEncounter>, FilterReport) {
    let mut report = FilterReport {
        rows_in: raw.len(),
        ..Default::default()
    };
    let kept: Vec<RawEncounter> = raw
        .into_iter()
        .filter(|r| {
            let race = is_missing(&r.race);
            let diag = [&r.diag_1, &r.diag_2, &r.diag_3].iter().any(|d| is_missing(d));
            report.missing_race += race as usize;
            report.missing_diagnosis += diag as usize;
            report.missing_both += (race && diag) as usize;
            !(race || diag)
        })
        .collect();
    report.rows_out = kept.len();
    (kept, report)
}

/// Columns excluded because they are mostly unrecorded.
pub const SPARSE_COLUMNS: [&str; 3] = ["weight", "payer_code", "medical_specialty"];

/// The 47 attribute columns of the source table.
pub fn source_columns() -> Vec<&'static str> {
    COLUMNS[2..49].to_vec()
}

pub fn drop_sparse_features(columns: &[&'static str]) -> Vec<&'static str> {
    columns
        .iter()
        .copied()
        .filter(|c| !SPARSE_COLUMNS.contains(c))
        .collect()
}

/// Drop every medication column except insulin.
pub fn drop_non_insulin_medications(columns: &[&'static str]) -> Vec<&'static str> {
    columns
        .iter()
        .copied()
        .filter(|c| *c == "insulin" || !MEDICATION_COLUMNS.contains(c))
        .collect()
}

pub const INSULIN_VALUES: [&str; 4] = ["No", "Steady", "Up", "Down"];

/// Insulin feature value; a missing entry is read as `"No"` and flagged.
pub fn reduce_medications(raw: &RawEncounter) -> (&str, bool) {
    if is_missing(&raw.insulin) {
        ("No", true)
    } else {
        (raw.insulin.as_str(), false)
    }
}

/// Counters for values that were coerced rather than rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionWarnings {
    pub insulin_missing_as_no: usize,
    pub unparseable_diagnosis: usize,
    pub test_result_missing_as_none: usize,
}

/// Build the 22-value feature row for one encounter.
pub fn extract_features(raw: &RawEncounter, warnings: &mut ExtractionWarnings) -> Result<FeatureRow> {
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    for spec in FEATURES.iter() {
        let v = match (spec.column, spec.kind) {
            ("diag_1" | "diag_2" | "diag_3", _) => {
                let g = group_icd9(raw.attribute(spec.column).expect("diag column"));
                if !g.parsed {
                    warnings.unparseable_diagnosis += 1;
                }
                RawValue::Text(g.group.name().to_string())
            }
            ("insulin", _) => {
                let (v, was_missing) = reduce_medications(raw);
                warnings.insulin_missing_as_no += was_missing as usize;
                RawValue::Text(v.to_string())
            }
            ("max_glu_serum" | "A1Cresult", _) => {
                let v = raw.attribute(spec.column).expect("test column");
                // Newer releases of the table leave "not measured" blank.
                if is_missing(v) || v == "NA" {
                    warnings.test_result_missing_as_none += 1;
                    RawValue::Text("None".into())
                } else {
                    RawValue::Text(v.to_string())
                }
            }
            (col, Kind::Nominal) => RawValue::Text(raw.attribute(col).expect("column").trim().to_string()),
            (col, Kind::Numeric(_)) => {
                let text = raw.attribute(col).expect("column").trim();
                let v: f64 = text.parse().map_err(|_| {
                    Error::Data(format!(
                        "encounter {}: {col} value {text:?} is not a number",
                        raw.encounter_id
                    ))
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Data(format!(
                        "encounter {}: {col} value {v} is not a non-negative count",
                        raw.encounter_id
                    )));
                }
                RawValue::Number(v)
            }
        };
        values.push(v);
    }
    Ok(FeatureRow {
        encounter_id: raw.encounter_id,
        readmitted: raw.readmitted,
        values,
    })
}

pub fn extract_all(raw: &[RawEncounter]) -> Result<(Vec<FeatureRow>, ExtractionWarnings)> {
    let mut warnings = ExtractionWarnings::default();
    let rows = raw
        .iter()
        .map(|r| extract_features(r, &mut warnings))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, warnings))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: BTreeMap<String, usize>,
    pub fractions: BTreeMap<String, f64>,
}

impl ClassDistribution {
    pub fn of<'a>(outcomes: impl IntoIterator<Item = &'a Readmitted>) -> Self {
        let mut counts: BTreeMap<String, usize> =
            Readmitted::ALL.iter().map(|r| (r.to_string(), 0)).collect();
        let mut total = 0usize;
        for r in outcomes {
            *counts.get_mut(r.as_str()).expect("known outcome") += 1;
            total += 1;
        }
        let fractions = counts
            .iter()
            .map(|(k, &c)| (k.clone(), if total == 0 { 0.0 } else { c as f64 / total as f64 }))
            .collect();
        Self { counts, fractions }
    }

    pub fn fraction(&self, r: Readmitted) -> f64 {
        self.fractions[r.as_str()]
    }
}

/// Per-column missing counts over the unfiltered table.
pub fn missing_counts(raw: &[RawEncounter]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = source_columns().iter().map(|c| (c.to_string(), 0)).collect();
    for r in raw {
        for (c, v) in r.attributes() {
            if is_missing(v) {
                *out.get_mut(c).expect("attribute column") += 1;
            }
        }
    }
    out
}

/// Everything downstream stages need after row filtering and extraction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub rows: Vec<FeatureRow>,
    pub filter: FilterReport,
    pub warnings: ExtractionWarnings,
    pub missing: BTreeMap<String, usize>,
    pub class_distribution: ClassDistribution,
}

pub fn prepare(raw: Vec<RawEncounter>) -> Result<Prepared> {
    let missing = missing_counts(&raw);
    let (kept, filter) = filter_rows(raw);
    log::info!(
        "row filter kept {} of {} encounters",
        filter.rows_out,
        filter.rows_in
    );
    let (rows, warnings) = extract_all(&kept)?;
    let class_distribution = ClassDistribution::of(rows.iter().map(|r| &r.readmitted));
    Ok(Prepared {
        rows,
        filter,
        warnings,
        missing,
        class_distribution,
    })
}

/// Rows of one task, split, with a schema fitted on the training portion.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task: Task,
    pub split: SplitPlan,
    pub schema: FeatureSchema,
    /// All task-eligible encounters, in ascending id order.
    pub vectors: Vec<EncounterVector>,
}

impl TaskData {
    pub fn build(rows: &[FeatureRow], task: Task, seed: u64) -> Result<Self> {
        let eligible: Vec<&FeatureRow> = rows
            .iter()
            .filter(|r| label(r.readmitted, task).is_some())
            .collect();
        let ids: Vec<u64> = eligible.iter().map(|r| r.encounter_id).collect();
        let labels: Vec<bool> = eligible
            .iter()
            .map(|r| label(r.readmitted, task).expect("eligible"))
            .collect();
        let split = make_split(&ids, &labels, seed)?;
        let schema = FeatureSchema::fit(
            eligible
                .iter()
                .copied()
                .filter(|r| split.is_train(r.encounter_id)),
        );
        let mut vectors = schema.encode_rows(eligible.iter().copied(), |r| label(r.readmitted, task))?;
        vectors.sort_by_key(|v| v.encounter_id);
        Ok(Self {
            task,
            split,
            schema,
            vectors,
        })
    }

    fn select(&self, ids: &[u64]) -> Vec<EncounterVector> {
        ids.iter()
            .map(|id| {
                let i = self
                    .vectors
                    .binary_search_by_key(id, |v| v.encounter_id)
                    .expect("split ids come from the vectors");
                self.vectors[i].clone()
            })
            .collect()
    }

    pub fn train(&self) -> Vec<EncounterVector> {
        self.select(&self.split.train_ids)
    }

    pub fn test(&self) -> Vec<EncounterVector> {
        self.select(&self.split.test_ids)
    }

    /// Training rows outside fold `k`, and the rows of fold `k`.
    pub fn fold(&self, k: usize) -> (Vec<EncounterVector>, Vec<EncounterVector>) {
        let held: Vec<u64> = self.split.cv_folds[k].clone();
        let rest: Vec<u64> = self
            .split
            .cv_folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (self.select(&rest), self.select(&held))
    }
}

//! Feature schema, encoded encounter vectors and one-hot expansion.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::Readmitted;

/// Reserved vocabulary entry for nominal values not seen while fitting.
pub const OTHER_BUCKET: &str = "<other>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Days,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Nominal,
    Numeric(Unit),
}

/// Static description of one retained risk factor.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    /// Dataset column name, also used as the item prefix in rule reports.
    pub column: &'static str,
    /// Human-readable label.
    pub label: &'static str,
    pub kind: Kind,
}

const fn nominal(column: &'static str, label: &'static str) -> FeatureSpec {
    FeatureSpec {
        column,
        label,
        kind: Kind::Nominal,
    }
}

const fn numeric(column: &'static str, label: &'static str, unit: Unit) -> FeatureSpec {
    FeatureSpec {
        column,
        label,
        kind: Kind::Numeric(unit),
    }
}

pub const FEATURE_COUNT: usize = 22;

/// The retained risk factors, in reporting order.
pub const FEATURES: [FeatureSpec; FEATURE_COUNT] = [
    nominal("race", "Race"),
    nominal("gender", "Gender"),
    nominal("age", "Age"),
    nominal("admission_type_id", "Admission Type"),
    nominal("discharge_disposition_id", "Discharge Disposition"),
    nominal("admission_source_id", "Admission Source"),
    numeric("time_in_hospital", "Time in Hospital", Unit::Days),
    numeric("num_lab_procedures", "Number of Lab Procedures", Unit::Count),
    numeric("num_procedures", "Number of Procedures", Unit::Count),
    numeric("num_medications", "Number of Medications", Unit::Count),
    numeric("number_outpatient", "Number of Outpatient Visits", Unit::Count),
    numeric("number_emergency", "Number of Emergency Visits", Unit::Count),
    numeric("number_inpatient", "Number of Inpatient Visits", Unit::Count),
    nominal("diag_1", "Diagnosis 1 (Primary)"),
    nominal("diag_2", "Diagnosis 2 (Secondary)"),
    nominal("diag_3", "Diagnosis 3 (Tertiary)"),
    numeric("number_diagnoses", "Number of Diagnoses", Unit::Count),
    nominal("max_glu_serum", "Glucose Serum Test"),
    nominal("A1Cresult", "A1C Test Result"),
    nominal("insulin", "Insulin"),
    nominal("change", "Change of Medication"),
    nominal("diabetesMed", "Diabetic Medication"),
];

/// Index of a feature by dataset column name.
pub fn feature_index(column: &str) -> Option<usize> {
    FEATURES.iter().position(|f| f.column == column)
}

/// Extracted but not yet encoded feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Text(String),
}

impl RawValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            RawValue::Text(s) => Some(s),
            RawValue::Number(_) => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            RawValue::Number(v) => Some(*v),
            RawValue::Text(_) => None,
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(v) => write!(f, "{v}"),
            RawValue::Text(s) => f.write_str(s),
        }
    }
}

/// One encounter after row filtering and feature extraction: 22 values in
/// [`FEATURES`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub encounter_id: u64,
    pub readmitted: Readmitted,
    pub values: Vec<RawValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DescriptorKind {
    /// Vocabulary observed while fitting, with [`OTHER_BUCKET`] last.
    Nominal { values: Vec<String> },
    Numeric { unit: Unit },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub label: String,
    #[serde(flatten)]
    pub kind: DescriptorKind,
}

impl FeatureDescriptor {
    pub fn is_nominal(&self) -> bool {
        matches!(self.kind, DescriptorKind::Nominal { .. })
    }

    /// Vocabulary size including the reserved bucket; 0 for numeric features.
    pub fn cardinality(&self) -> usize {
        match &self.kind {
            DescriptorKind::Nominal { values } => values.len(),
            DescriptorKind::Numeric { .. } => 0,
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        match &self.kind {
            DescriptorKind::Nominal { values } => values,
            DescriptorKind::Numeric { .. } => &[],
        }
    }

    /// Index of the reserved bucket.
    pub fn other_code(&self) -> u32 {
        (self.cardinality() - 1) as u32
    }
}

/// Stable content hash of a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaFingerprint(pub u64);

impl fmt::Display for SchemaFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDescriptor>,
}

/// Natural ordering for vocabularies: integers numerically, then text.
fn vocab_order(a: &String, b: &String) -> std::cmp::Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

impl FeatureSchema {
    /// Freeze vocabularies from the given (training) rows.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Self {
        let mut seen: Vec<BTreeSet<String>> = vec![BTreeSet::new(); FEATURE_COUNT];
        for row in rows {
            for (i, spec) in FEATURES.iter().enumerate() {
                if spec.kind == Kind::Nominal {
                    if let RawValue::Text(s) = &row.values[i] {
                        if !seen[i].contains(s) {
                            seen[i].insert(s.clone());
                        }
                    }
                }
            }
        }
        let features = FEATURES
            .iter()
            .zip(seen)
            .map(|(spec, vocab)| {
                let kind = match spec.kind {
                    Kind::Nominal => {
                        let mut values: Vec<String> = vocab.into_iter().collect();
                        values.sort_by(vocab_order);
                        values.push(OTHER_BUCKET.to_string());
                        DescriptorKind::Nominal { values }
                    }
                    Kind::Numeric(unit) => DescriptorKind::Numeric { unit },
                };
                FeatureDescriptor {
                    name: spec.column.to_string(),
                    label: spec.label.to_string(),
                    kind,
                }
            })
            .collect();
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn fingerprint(&self) -> SchemaFingerprint {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&bytes);
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        SchemaFingerprint(u64::from_be_bytes(word))
    }

    /// Code of a nominal value; unseen values map to the reserved bucket.
    pub fn nominal_code(&self, feature: usize, value: &str) -> u32 {
        let desc = &self.features[feature];
        desc.vocabulary()[..desc.cardinality() - 1]
            .iter()
            .position(|v| v == value)
            .map_or(desc.other_code(), |p| p as u32)
    }

    pub fn encode(&self, row: &FeatureRow, label: bool) -> Result<EncounterVector> {
        self.encode_with(row, label, self.fingerprint())
    }

    /// Encode many rows; `label_of` returns `None` for rows to skip.
    pub fn encode_rows<'a>(
        &self,
        rows: impl IntoIterator<Item = &'a FeatureRow>,
        mut label_of: impl FnMut(&FeatureRow) -> Option<bool>,
    ) -> Result<Vec<EncounterVector>> {
        let fp = self.fingerprint();
        rows.into_iter()
            .filter_map(|r| label_of(r).map(|l| self.encode_with(r, l, fp)))
            .collect()
    }

    fn encode_with(&self, row: &FeatureRow, label: bool, fingerprint: SchemaFingerprint) -> Result<EncounterVector> {
        if row.values.len() != self.features.len() {
            return Err(Error::Data(format!(
                "encounter {} has {} features, schema has {}",
                row.encounter_id,
                row.values.len(),
                self.features.len()
            )));
        }
        let values = self
            .features
            .iter()
            .zip(&row.values)
            .enumerate()
            .map(|(i, (desc, raw))| match (&desc.kind, raw) {
                (DescriptorKind::Nominal { .. }, RawValue::Text(s)) => {
                    Ok(FeatureValue::Nominal(self.nominal_code(i, s)))
                }
                (DescriptorKind::Numeric { .. }, RawValue::Number(v)) if v.is_finite() && *v >= 0.0 => {
                    Ok(FeatureValue::Numeric(*v))
                }
                _ => Err(Error::Data(format!(
                    "encounter {}: value {raw} does not fit feature {}",
                    row.encounter_id, desc.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncounterVector {
            encounter_id: row.encounter_id,
            values,
            label,
            raw_readmitted: row.readmitted,
            fingerprint,
        })
    }

    /// Decode an encoded value back to its display text.
    pub fn display_value(&self, feature: usize, value: FeatureValue) -> String {
        match value {
            FeatureValue::Nominal(c) => self.features[feature].vocabulary()[c as usize].clone(),
            FeatureValue::Numeric(v) => format!("{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Nominal(u32),
    Numeric(f64),
}

impl FeatureValue {
    /// Nominal code or numeric value as a float; used by learners that keep a
    /// dense representation.
    pub fn as_f64(self) -> f64 {
        match self {
            FeatureValue::Nominal(c) => c as f64,
            FeatureValue::Numeric(v) => v,
        }
    }
}

/// A preprocessed, schema-conformant encounter labelled for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterVector {
    pub encounter_id: u64,
    pub values: Vec<FeatureValue>,
    pub label: bool,
    pub raw_readmitted: Readmitted,
    pub fingerprint: SchemaFingerprint,
}

/// Expands nominal features into indicator dimensions; numeric features pass
/// through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    offsets: Vec<usize>,
    widths: Vec<usize>,
    dim: usize,
}

impl OneHotEncoder {
    pub fn new(schema: &FeatureSchema) -> Self {
        let mut offsets = Vec::with_capacity(schema.len());
        let mut widths = Vec::with_capacity(schema.len());
        let mut dim = 0;
        for f in &schema.features {
            let w = if f.is_nominal() { f.cardinality() } else { 1 };
            offsets.push(dim);
            widths.push(w);
            dim += w;
        }
        Self {
            offsets,
            widths,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension range occupied by one source feature.
    pub fn span(&self, feature: usize) -> std::ops::Range<usize> {
        self.offsets[feature]..self.offsets[feature] + self.widths[feature]
    }

    pub fn encode_into(&self, x: &EncounterVector, out: &mut [f64]) {
        out.fill(0.0);
        for (i, v) in x.values.iter().enumerate() {
            match *v {
                FeatureValue::Nominal(c) => out[self.offsets[i] + c as usize] = 1.0,
                FeatureValue::Numeric(v) => out[self.offsets[i]] = v,
            }
        }
    }

    pub fn encode(&self, x: &EncounterVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.encode_into(x, &mut out);
        out
    }

    pub fn dim_names(&self, schema: &FeatureSchema) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim);
        for f in &schema.features {
            match &f.kind {
                DescriptorKind::Nominal { values } => {
                    names.extend(values.iter().map(|v| format!("{}={v}", f.name)))
                }
                DescriptorKind::Numeric { .. } => names.push(f.name.clone()),
            }
        }
        names
    }
}

pub fn encode_onehot(x: &EncounterVector, schema: &FeatureSchema) -> Result<Vec<f64>> {
    let fp = schema.fingerprint();
    if x.fingerprint != fp {
        return Err(Error::SchemaMismatch {
            expected: fp.to_string(),
            found: x.fingerprint.to_string(),
        });
    }
    Ok(OneHotEncoder::new(schema).encode(x))
}

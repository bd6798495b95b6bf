//! Schema-conformant synthetic encounter tables.
//!
//! The generator reproduces the column layout, value vocabularies and rough
//! marginal frequencies of the real encounter table, with planted signal:
//! prior inpatient visits, discharge disposition and admission type drive
//! readmission, and the number of lab procedures separates early from late
//! readmissions. It exists for tests, demos and performance checks; scores
//! obtained on it say nothing about the real data.

use std::io::Write;

use csv::StringRecord;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_dataset, RawEncounter, COLUMNS, MEDICATION_COLUMNS};

/// Size of the published encounter table.
pub const FULL_SIZE: usize = 101_766;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: FULL_SIZE,
            seed: 0,
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, table: &[(&'a str, f64)]) -> &'a str {
    let w = WeightedIndex::new(table.iter().map(|(_, p)| *p)).expect("static weights");
    table[w.sample(rng)].0
}

const RACE: &[(&str, f64)] = &[
    ("Caucasian", 74.8),
    ("AfricanAmerican", 18.9),
    ("?", 2.2),
    ("Hispanic", 2.0),
    ("Other", 1.5),
    ("Asian", 0.6),
];
const GENDER: &[(&str, f64)] = &[("Female", 53.8), ("Male", 46.2)];
const AGE: &[(&str, f64)] = &[
    ("[0-10)", 0.2),
    ("[10-20)", 0.7),
    ("[20-30)", 1.6),
    ("[30-40)", 3.7),
    ("[40-50)", 9.5),
    ("[50-60)", 17.0),
    ("[60-70)", 22.1),
    ("[70-80)", 25.6),
    ("[80-90)", 16.9),
    ("[90-100)", 2.7),
];
const ADMISSION_TYPE: &[(&str, f64)] = &[
    ("1", 53.1),
    ("3", 18.5),
    ("2", 18.2),
    ("6", 5.2),
    ("5", 4.7),
    ("8", 0.3),
    ("7", 0.02),
    ("4", 0.01),
];
const DISCHARGE: &[(&str, f64)] = &[
    ("1", 59.2),
    ("3", 13.7),
    ("6", 12.7),
    ("18", 3.6),
    ("2", 2.1),
    ("22", 2.0),
    ("11", 1.6),
    ("5", 1.2),
    ("25", 1.0),
    ("4", 0.8),
    ("7", 0.6),
    ("23", 0.4),
    ("13", 0.4),
    ("14", 0.4),
    ("28", 0.1),
    ("8", 0.1),
];
const ADMISSION_SOURCE: &[(&str, f64)] = &[
    ("7", 56.5),
    ("1", 29.1),
    ("17", 6.7),
    ("4", 3.1),
    ("6", 2.2),
    ("2", 1.1),
    ("5", 0.8),
    ("3", 0.2),
    ("20", 0.2),
    ("9", 0.1),
];
const DIAGNOSIS: &[(&[&str], f64)] = &[
    (&["428", "414", "410", "427", "434", "435", "440", "785"], 30.0),
    (&["276", "780", "682", "V57", "E878", "038", "707", "V45"], 18.0),
    (&["486", "491", "493", "518", "786"], 14.0),
    (&["530", "558", "562", "577", "787"], 9.0),
    (&["250", "250.01", "250.02", "250.13", "250.6", "250.8"], 8.0),
    (&["820", "996", "998", "812"], 7.0),
    (&["715", "722", "730"], 5.0),
    (&["599", "584", "788"], 5.0),
    (&["162", "174", "197"], 3.5),
];
const GLU: &[(&str, f64)] = &[("None", 94.7), ("Norm", 2.6), (">200", 1.5), (">300", 1.2)];
const A1C: &[(&str, f64)] = &[("None", 83.3), (">8", 8.1), ("Norm", 4.9), (">7", 3.7)];
const INSULIN: &[(&str, f64)] = &[("No", 46.6), ("Steady", 30.3), ("Down", 12.0), ("Up", 11.1)];
const ORAL: &[(&str, f64)] = &[
    ("metformin", 19.6),
    ("glipizide", 12.5),
    ("glyburide", 10.5),
    ("pioglitazone", 7.2),
    ("rosiglitazone", 6.3),
    ("glimepiride", 5.1),
    ("repaglinide", 1.5),
    ("nateglinide", 0.7),
    ("acarbose", 0.3),
    ("glyburide-metformin", 0.7),
];
const DOSE: &[(&str, f64)] = &[("Steady", 85.0), ("Up", 8.0), ("Down", 7.0)];

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn diagnosis<R: Rng>(rng: &mut R) -> (String, bool) {
    let w = WeightedIndex::new(DIAGNOSIS.iter().map(|(_, p)| *p)).expect("static weights");
    let g = w.sample(rng);
    let codes = DIAGNOSIS[g].0;
    (codes[rng.random_range(0..codes.len())].to_string(), g == 0)
}

fn count<R: Rng>(rng: &mut R, mean: f64, max: f64) -> f64 {
    Poisson::new(mean).expect("positive mean").sample(rng).min(max)
}

/// One encounter in dataset column order.
fn record<R: Rng>(rng: &mut R, index: usize) -> Vec<String> {
    let mut cells: Vec<String> = vec![String::new(); COLUMNS.len()];
    let mut set = |col: &str, v: String| {
        let i = COLUMNS.iter().position(|c| *c == col).expect("known column");
        cells[i] = v;
    };
    set("encounter_id", (12_522 + 7 * index as u64).to_string());
    set("patient_nbr", rng.random_range(100_000u64..200_000_000).to_string());
    set("race", pick(rng, RACE).into());
    set("gender", pick(rng, GENDER).into());
    set("age", pick(rng, AGE).into());
    set(
        "weight",
        if rng.random_bool(0.03) { "[75-100)" } else { "?" }.into(),
    );
    let admission_type = pick(rng, ADMISSION_TYPE);
    let discharge = pick(rng, DISCHARGE);
    set("admission_type_id", admission_type.into());
    set("discharge_disposition_id", discharge.into());
    set("admission_source_id", pick(rng, ADMISSION_SOURCE).into());
    let stay = (1.0 + count(rng, 3.4, 13.0)).min(14.0);
    set("time_in_hospital", stay.to_string());
    set("payer_code", if rng.random_bool(0.4) { "?" } else { "MC" }.into());
    set(
        "medical_specialty",
        if rng.random_bool(0.49) {
            "?"
        } else {
            "InternalMedicine"
        }
        .into(),
    );
    let labs = Normal::<f64>::new(43.0, 19.7)
        .expect("valid")
        .sample(rng)
        .round()
        .clamp(1.0, 132.0);
    set("num_lab_procedures", labs.to_string());
    set("num_procedures", count(rng, 1.34, 6.0).to_string());
    set(
        "num_medications",
        (1.0 + count(rng, 15.0 + stay, 80.0)).to_string(),
    );
    let outpatient = if rng.random_bool(0.16) {
        1.0 + count(rng, 1.3, 41.0)
    } else {
        0.0
    };
    let emergency = if rng.random_bool(0.11) {
        1.0 + count(rng, 0.8, 75.0)
    } else {
        0.0
    };
    let inpatient = if rng.random_bool(0.34) {
        1.0 + count(rng, 0.9, 20.0)
    } else {
        0.0
    };
    set("number_outpatient", outpatient.to_string());
    set("number_emergency", emergency.to_string());
    set("number_inpatient", inpatient.to_string());
    let (d1, circulatory) = diagnosis(rng);
    set("diag_1", if rng.random_bool(0.0002) { "?".into() } else { d1 });
    let d2 = diagnosis(rng).0;
    set("diag_2", if rng.random_bool(0.0035) { "?".into() } else { d2 });
    let d3 = diagnosis(rng).0;
    set("diag_3", if rng.random_bool(0.014) { "?".into() } else { d3 });
    set(
        "number_diagnoses",
        (3.0 + count(rng, 4.4, 13.0)).to_string(),
    );
    set("max_glu_serum", pick(rng, GLU).into());
    set("A1Cresult", pick(rng, A1C).into());

    let mut changed = false;
    let mut any_med = false;
    for med in MEDICATION_COLUMNS {
        set(med, "No".into());
    }
    for (med, p) in ORAL {
        if rng.random_bool(p / 100.0) {
            let dose = pick(rng, DOSE);
            changed |= dose != "Steady";
            any_med = true;
            set(med, dose.into());
        }
    }
    let insulin = pick(rng, INSULIN);
    changed |= insulin == "Up" || insulin == "Down";
    any_med |= insulin != "No";
    set("insulin", insulin.into());
    set("change", if changed { "Ch" } else { "No" }.into());
    set("diabetesMed", if any_med { "Yes" } else { "No" }.into());

    let risky_discharge = matches!(discharge, "3" | "22" | "5");
    let readmit_logit = -1.05
        + 0.45 * inpatient.min(6.0)
        + 0.8 * risky_discharge as u8 as f64
        + 0.35 * (admission_type == "1") as u8 as f64
        + 0.15 * emergency.min(5.0)
        + 0.05 * (stay - 4.0)
        + 0.15 * circulatory as u8 as f64
        + 0.2 * (insulin != "No") as u8 as f64;
    let early_logit = -1.6
        + 0.035 * (labs - 43.0)
        + 0.2 * inpatient.min(6.0)
        + 0.5 * matches!(discharge, "22" | "3") as u8 as f64;
    let outcome = if discharge == "11" || !rng.random_bool(sigmoid(readmit_logit)) {
        "NO"
    } else if rng.random_bool(sigmoid(early_logit)) {
        "<30"
    } else {
        ">30"
    };
    set("readmitted", outcome.into());
    cells
}

/// Deterministic table of `spec.rows` encounters.
pub fn generate(spec: &SyntheticSpec) -> Vec<RawEncounter> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let header = StringRecord::from(COLUMNS.to_vec());
    (0..spec.rows)
        .map(|i| {
            StringRecord::from(record(&mut rng, i))
                .deserialize(Some(&header))
                .expect("generated rows match the column layout")
        })
        .collect()
}

pub fn write_csv<W: Write>(w: W, spec: &SyntheticSpec) -> Result<()> {
    write_dataset(w, &generate(spec))
}

const MAPPINGS: &[(&str, &[(i64, &str)])] = &[
    (
        "admission_type_id",
        &[
            (1, "Emergency"),
            (2, "Urgent"),
            (3, "Elective"),
            (4, "Newborn"),
            (5, "Not Available"),
            (6, "NULL"),
            (7, "Trauma Center"),
            (8, "Not Mapped"),
        ],
    ),
    (
        "discharge_disposition_id",
        &[
            (1, "Discharged to home"),
            (2, "Discharged/transferred to another short term hospital"),
            (3, "Discharged/transferred to SNF"),
            (4, "Discharged/transferred to ICF"),
            (5, "Discharged/transferred to another type of inpatient care institution"),
            (6, "Discharged/transferred to home with home health service"),
            (7, "Left AMA"),
            (8, "Discharged/transferred to home under care of Home IV provider"),
            (11, "Expired"),
            (13, "Hospice / home"),
            (14, "Hospice / medical facility"),
            (18, "NULL"),
            (22, "Discharged/transferred to another rehab fac including rehab units of a hospital ."),
            (23, "Discharged/transferred to a long term care hospital."),
            (25, "Not Mapped"),
            (28, "Discharged/transferred to a psychiatric hospital of psychiatric distinct part unit of a hospital"),
        ],
    ),
    (
        "admission_source_id",
        &[
            (1, " Physician Referral"),
            (2, "Clinic Referral"),
            (3, "HMO Referral"),
            (4, "Transfer from a hospital"),
            (5, " Transfer from a Skilled Nursing Facility (SNF)"),
            (6, " Transfer from another health care facility"),
            (7, " Emergency Room"),
            (9, "Not Available"),
            (17, "NULL"),
            (20, " Not Mapped"),
        ],
    ),
];

/// ID-mapping file in the sectioned layout, covering every id the generator
/// emits.
pub fn write_id_mappings<W: Write>(w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(w);
    for (i, (table, rows)) in MAPPINGS.iter().enumerate() {
        if i > 0 {
            wtr.write_record([""])?;
        }
        wtr.write_record([*table, "description"])?;
        for (id, d) in rows.iter() {
            wtr.write_record([id.to_string().as_str(), d])?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::Data(format!("writing id mappings: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_dataset, read_id_mappings, IdMappings, MappingTable, Readmitted};
    use crate::preprocess::{prepare, ClassDistribution};

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SyntheticSpec { rows: 300, seed: 4 };
        assert_eq!(generate(&spec), generate(&spec));
        assert_ne!(generate(&spec), generate(&SyntheticSpec { seed: 5, ..spec }));
    }

    #[test]
    fn csv_round_trips_through_the_loader() {
        let spec = SyntheticSpec { rows: 500, seed: 1 };
        let mut buf = Vec::new();
        write_csv(&mut buf, &spec).unwrap();
        let ds = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(ds.encounters, generate(&spec));
    }

    #[test]
    fn class_mix_and_filtering_resemble_source() {
        let raw = generate(&SyntheticSpec {
            rows: 20_000,
            seed: 2,
        });
        let dist = ClassDistribution::of(raw.iter().map(|r| &r.readmitted));
        let lt30 = dist.fraction(Readmitted::Within30);
        let gt30 = dist.fraction(Readmitted::After30);
        assert!((0.08..0.15).contains(&lt30), "{lt30}");
        assert!((0.28..0.42).contains(&gt30), "{gt30}");
        let p = prepare(raw).unwrap();
        let dropped = p.filter.rows_in - p.filter.rows_out;
        assert!(dropped > 300 && dropped < 900, "{dropped}");
    }

    #[test]
    fn mappings_cover_generated_ids() {
        let mut buf = Vec::new();
        write_id_mappings(&mut buf).unwrap();
        let maps = IdMappings::from_entries(read_id_mappings(buf.as_slice()).unwrap()).unwrap();
        for r in generate(&SyntheticSpec { rows: 2000, seed: 3 }) {
            for t in [
                MappingTable::AdmissionType,
                MappingTable::DischargeDisposition,
                MappingTable::AdmissionSource,
            ] {
                let id = r.attribute(t.column()).unwrap();
                assert!(maps.describe(t, id).is_some(), "{t:?} {id}");
            }
        }
    }
}

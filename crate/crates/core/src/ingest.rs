//! Reading and validating the raw encounter table and the ID-mapping file.
//!
//! Everything stays a string at this layer; typing happens in
//! [`crate::preprocess`]. The only fields interpreted here are the two
//! identifiers and the readmission outcome, because their invariants
//! (uniqueness, closed vocabulary) are checked on load.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Missing-value token used throughout the published dataset.
pub const MISSING: &str = "?";

/// `true` for the dataset's missing marker and for empty cells.
pub fn is_missing(value: &str) -> bool {
    value == MISSING || value.is_empty()
}

/// Readmission outcome recorded for an encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Readmitted {
    #[serde(rename = "<30")]
    Within30,
    #[serde(rename = ">30")]
    After30,
    #[serde(rename = "NO")]
    No,
}

impl Readmitted {
    pub const ALL: [Readmitted; 3] = [Readmitted::Within30, Readmitted::After30, Readmitted::No];

    pub fn as_str(self) -> &'static str {
        match self {
            Readmitted::Within30 => "<30",
            Readmitted::After30 => ">30",
            Readmitted::No => "NO",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value {
            "<30" => Some(Readmitted::Within30),
            ">30" => Some(Readmitted::After30),
            "NO" => Some(Readmitted::No),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Readmitted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Column order of the published `diabetic_data.csv`.
pub const COLUMNS: [&str; 50] = [
    "encounter_id",
    "patient_nbr",
    "race",
    "gender",
    "age",
    "weight",
    "admission_type_id",
    "discharge_disposition_id",
    "admission_source_id",
    "time_in_hospital",
    "payer_code",
    "medical_specialty",
    "num_lab_procedures",
    "num_procedures",
    "num_medications",
    "number_outpatient",
    "number_emergency",
    "number_inpatient",
    "diag_1",
    "diag_2",
    "diag_3",
    "number_diagnoses",
    "max_glu_serum",
    "A1Cresult",
    "metformin",
    "repaglinide",
    "nateglinide",
    "chlorpropamide",
    "glimepiride",
    "acetohexamide",
    "glipizide",
    "glyburide",
    "tolbutamide",
    "pioglitazone",
    "rosiglitazone",
    "acarbose",
    "miglitol",
    "troglitazone",
    "tolazamide",
    "examide",
    "citoglipton",
    "insulin",
    "glyburide-metformin",
    "glipizide-metformin",
    "glimepiride-pioglitazone",
    "metformin-rosiglitazone",
    "metformin-pioglitazone",
    "change",
    "diabetesMed",
    "readmitted",
];

/// The 23 medication columns, in file order.
pub const MEDICATION_COLUMNS: [&str; 23] = [
    "metformin",
    "repaglinide",
    "nateglinide",
    "chlorpropamide",
    "glimepiride",
    "acetohexamide",
    "glipizide",
    "glyburide",
    "tolbutamide",
    "pioglitazone",
    "rosiglitazone",
    "acarbose",
    "miglitol",
    "troglitazone",
    "tolazamide",
    "examide",
    "citoglipton",
    "insulin",
    "glyburide-metformin",
    "glipizide-metformin",
    "glimepiride-pioglitazone",
    "metformin-rosiglitazone",
    "metformin-pioglitazone",
];

/// One data row of the source table. Attribute fields are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEncounter {
    pub encounter_id: u64,
    pub patient_nbr: u64,
    pub race: String,
    pub gender: String,
    pub age: String,
    pub weight: String,
    pub admission_type_id: String,
    pub discharge_disposition_id: String,
    pub admission_source_id: String,
    pub time_in_hospital: String,
    pub payer_code: String,
    pub medical_specialty: String,
    pub num_lab_procedures: String,
    pub num_procedures: String,
    pub num_medications: String,
    pub number_outpatient: String,
    pub number_emergency: String,
    pub number_inpatient: String,
    pub diag_1: String,
    pub diag_2: String,
    pub diag_3: String,
    pub number_diagnoses: String,
    pub max_glu_serum: String,
    #[serde(rename = "A1Cresult")]
    pub a1c_result: String,
    pub metformin: String,
    pub repaglinide: String,
    pub nateglinide: String,
    pub chlorpropamide: String,
    pub glimepiride: String,
    pub acetohexamide: String,
    pub glipizide: String,
    pub glyburide: String,
    pub tolbutamide: String,
    pub pioglitazone: String,
    pub rosiglitazone: String,
    pub acarbose: String,
    pub miglitol: String,
    pub troglitazone: String,
    pub tolazamide: String,
    pub examide: String,
    pub citoglipton: String,
    pub insulin: String,
    #[serde(rename = "glyburide-metformin")]
    pub glyburide_metformin: String,
    #[serde(rename = "glipizide-metformin")]
    pub glipizide_metformin: String,
    #[serde(rename = "glimepiride-pioglitazone")]
    pub glimepiride_pioglitazone: String,
    #[serde(rename = "metformin-rosiglitazone")]
    pub metformin_rosiglitazone: String,
    #[serde(rename = "metformin-pioglitazone")]
    pub metformin_pioglitazone: String,
    pub change: String,
    #[serde(rename = "diabetesMed")]
    pub diabetes_med: String,
    pub readmitted: Readmitted,
}

impl RawEncounter {
    /// Attribute value by dataset column name. Identifiers and `readmitted`
    /// are not attributes and return `None`.
    pub fn attribute(&self, column: &str) -> Option<&str> {
        let v = match column {
            "race" => &self.race,
            "gender" => &self.gender,
            "age" => &self.age,
            "weight" => &self.weight,
            "admission_type_id" => &self.admission_type_id,
            "discharge_disposition_id" => &self.discharge_disposition_id,
            "admission_source_id" => &self.admission_source_id,
            "time_in_hospital" => &self.time_in_hospital,
            "payer_code" => &self.payer_code,
            "medical_specialty" => &self.medical_specialty,
            "num_lab_procedures" => &self.num_lab_procedures,
            "num_procedures" => &self.num_procedures,
            "num_medications" => &self.num_medications,
            "number_outpatient" => &self.number_outpatient,
            "number_emergency" => &self.number_emergency,
            "number_inpatient" => &self.number_inpatient,
            "diag_1" => &self.diag_1,
            "diag_2" => &self.diag_2,
            "diag_3" => &self.diag_3,
            "number_diagnoses" => &self.number_diagnoses,
            "max_glu_serum" => &self.max_glu_serum,
            "A1Cresult" => &self.a1c_result,
            "change" => &self.change,
            "diabetesMed" => &self.diabetes_med,
            other => return self.medication(other),
        };
        Some(v.as_str())
    }

    /// Medication column value by name.
    pub fn medication(&self, column: &str) -> Option<&str> {
        let v = match column {
            "metformin" => &self.metformin,
            "repaglinide" => &self.repaglinide,
            "nateglinide" => &self.nateglinide,
            "chlorpropamide" => &self.chlorpropamide,
            "glimepiride" => &self.glimepiride,
            "acetohexamide" => &self.acetohexamide,
            "glipizide" => &self.glipizide,
            "glyburide" => &self.glyburide,
            "tolbutamide" => &self.tolbutamide,
            "pioglitazone" => &self.pioglitazone,
            "rosiglitazone" => &self.rosiglitazone,
            "acarbose" => &self.acarbose,
            "miglitol" => &self.miglitol,
            "troglitazone" => &self.troglitazone,
            "tolazamide" => &self.tolazamide,
            "examide" => &self.examide,
            "citoglipton" => &self.citoglipton,
            "insulin" => &self.insulin,
            "glyburide-metformin" => &self.glyburide_metformin,
            "glipizide-metformin" => &self.glipizide_metformin,
            "glimepiride-pioglitazone" => &self.glimepiride_pioglitazone,
            "metformin-rosiglitazone" => &self.metformin_rosiglitazone,
            "metformin-pioglitazone" => &self.metformin_pioglitazone,
            _ => return None,
        };
        Some(v.as_str())
    }

    /// All 47 attribute columns with their raw values, in file order.
    pub fn attributes(&self) -> impl Iterator<Item = (&'static str, &str)> + '_ {
        COLUMNS[2..49]
            .iter()
            .map(move |&c| (c, self.attribute(c).expect("attribute column")))
    }
}

/// Load statistics. Empty cells are legal (treated as missing) but counted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub rows: usize,
    pub empty_cells: usize,
}

/// Parsed dataset plus load statistics.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub encounters: Vec<RawEncounter>,
    pub stats: LoadStats,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file)
}

/// Parse a dataset from any reader. The header row is required; every data
/// row must have exactly one cell per header column.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() == 0 {
        return Err(Error::MalformedRow {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let names: HashSet<&str> = headers.iter().collect();
    if let Some(col) = COLUMNS.iter().find(|c| !names.contains(**c)) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("header lacks column {col:?}"),
        });
    }
    let readmitted_col = headers
        .iter()
        .position(|h| h == "readmitted")
        .expect("checked above");

    let mut encounters = Vec::new();
    let mut seen = HashSet::new();
    let mut empty_cells = 0usize;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} columns, found {}", headers.len(), record.len()),
            });
        }
        let outcome = &record[readmitted_col];
        if Readmitted::parse(outcome).is_none() {
            return Err(Error::UnknownReadmitted {
                line,
                value: outcome.to_string(),
            });
        }
        empty_cells += record.iter().filter(|c| c.is_empty()).count();
        let enc: RawEncounter = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::MalformedRow {
                line,
                message: e.to_string(),
            })?;
        if !seen.insert(enc.encounter_id) {
            return Err(Error::DuplicateEncounter {
                line,
                id: enc.encounter_id,
            });
        }
        encounters.push(enc);
    }
    if empty_cells > 0 {
        log::warn!("{empty_cells} empty cells treated as missing");
    }
    let stats = LoadStats {
        rows: encounters.len(),
        empty_cells,
    };
    log::info!("loaded {} encounters", stats.rows);
    Ok(Dataset { encounters, stats })
}

/// Write encounters back in the published column order.
pub fn write_dataset<W: Write>(writer: W, encounters: &[RawEncounter]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if encounters.is_empty() {
        wtr.write_record(COLUMNS)?;
    }
    for enc in encounters {
        wtr.serialize(enc)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Lookup tables shipped alongside the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingTable {
    AdmissionType,
    DischargeDisposition,
    AdmissionSource,
}

impl MappingTable {
    pub const ALL: [MappingTable; 3] = [
        MappingTable::AdmissionType,
        MappingTable::DischargeDisposition,
        MappingTable::AdmissionSource,
    ];

    /// Dataset column holding this table's ids.
    pub fn column(self) -> &'static str {
        match self {
            MappingTable::AdmissionType => "admission_type_id",
            MappingTable::DischargeDisposition => "discharge_disposition_id",
            MappingTable::AdmissionSource => "admission_source_id",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.column() == name.trim())
    }
}

impl fmt::Display for MappingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMapping {
    pub table: MappingTable,
    pub id: i64,
    pub description: String,
}

/// Parsed mapping file, keyed by `(table, id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMappings {
    entries: BTreeMap<(MappingTable, i64), String>,
}

impl IdMappings {
    pub fn from_entries(list: Vec<IdMapping>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for m in list {
            if entries.insert((m.table, m.id), m.description).is_some() {
                return Err(Error::DuplicateMapping {
                    table: m.table.to_string(),
                    id: m.id,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn describe(&self, table: MappingTable, id: &str) -> Option<&str> {
        let id: i64 = id.trim().parse().ok()?;
        self.entries.get(&(table, id)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = IdMapping> + '_ {
        self.entries.iter().map(|(&(table, id), d)| IdMapping {
            table,
            id,
            description: d.clone(),
        })
    }
}

pub fn load_id_mappings(path: impl AsRef<Path>) -> Result<Vec<IdMapping>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_id_mappings(file)
}

/// Parse an ID-mapping file.
///
/// Two layouts are accepted and may be mixed:
/// * the published sectioned layout, where a `<table column>,description`
///   line opens a section followed by `id,description` rows, and sections
///   are separated by blank or `,` lines;
/// * flat rows of the form `<table column>,id,description`.
pub fn read_id_mappings<R: Read>(reader: R) -> Result<Vec<IdMapping>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut section: Option<MappingTable> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cells: Vec<&str> = rec.iter().map(str::trim).collect();
        if cells.iter().all(|c| c.is_empty()) {
            section = None;
            continue;
        }
        let (table, id, description) = if let Some(t) = MappingTable::from_column(cells[0]) {
            match cells.len() {
                2 if cells[1].eq_ignore_ascii_case("description") => {
                    section = Some(t);
                    continue;
                }
                3.. => (t, cells[1], cells[2..].join(",")),
                _ => {
                    return Err(Error::MalformedRow {
                        line,
                        message: "mapping row needs table, id and description".into(),
                    })
                }
            }
        } else if let Some(t) = section {
            (t, cells[0], cells[1..].join(","))
        } else {
            return Err(Error::MalformedRow {
                line,
                message: format!("row {:?} is outside any mapping section", cells[0]),
            });
        };
        let id: i64 = id.parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("mapping id {id:?} is not an integer"),
        })?;
        if !seen.insert((table, id)) {
            return Err(Error::DuplicateMapping {
                table: table.to_string(),
                id,
            });
        }
        out.push(IdMapping {
            table,
            id,
            description: description.trim().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header() -> String {
        COLUMNS.join(",")
    }

    pub(crate) fn row(id: u64, readmitted: &str) -> String {
        let mut cells: Vec<String> = COLUMNS.iter().map(|_| "No".to_string()).collect();
        cells[0] = id.to_string();
        cells[1] = (id * 10).to_string();
        cells[2] = "Caucasian".into();
        cells[3] = "Female".into();
        cells[4] = "[70-80)".into();
        cells[5] = "?".into();
        cells[6] = "1".into();
        cells[7] = "3".into();
        cells[8] = "7".into();
        cells[9] = "4".into();
        cells[10] = "MC".into();
        cells[11] = "?".into();
        for (i, v) in ["41", "0", "12", "0", "0", "1"].iter().enumerate() {
            cells[12 + i] = v.to_string();
        }
        cells[18] = "250.83".into();
        cells[19] = "428".into();
        cells[20] = "V45".into();
        cells[21] = "9".into();
        cells[22] = "None".into();
        cells[23] = ">8".into();
        cells[41] = "Steady".into();
        cells[47] = "Ch".into();
        cells[48] = "Yes".into();
        cells[49] = readmitted.into();
        cells.join(",")
    }

    #[test]
    fn parses_rows_and_counts() {
        let text = format!("{}\n{}\n{}\n", header(), row(1, "<30"), row(2, "NO"));
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.stats.rows, 2);
        assert_eq!(ds.encounters[0].readmitted, Readmitted::Within30);
        assert_eq!(ds.encounters[1].a1c_result, ">8");
        assert_eq!(ds.encounters[0].attribute("insulin"), Some("Steady"));
        assert_eq!(ds.encounters[0].attributes().count(), 47);
    }

    #[test]
    fn header_only_is_empty() {
        let ds = read_dataset(format!("{}\n", header()).as_bytes()).unwrap();
        assert!(ds.encounters.is_empty());
    }

    #[test]
    fn short_row_names_line() {
        let text = format!("{}\n{}\n1,2,3,4,5,6,7,8,9,10\n", header(), row(1, "NO"));
        match read_dataset(text.as_bytes()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_outcome_rejected() {
        let text = format!("{}\n{}\n", header(), row(1, "YES"));
        assert!(matches!(
            read_dataset(text.as_bytes()),
            Err(Error::UnknownReadmitted { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_encounter_rejected() {
        let text = format!("{}\n{}\n{}\n", header(), row(5, "NO"), row(5, ">30"));
        assert!(matches!(
            read_dataset(text.as_bytes()),
            Err(Error::DuplicateEncounter { id: 5, .. })
        ));
    }

    #[test]
    fn empty_cells_counted() {
        let r = row(1, "NO").replacen(",MC,", ",,", 1);
        let ds = read_dataset(format!("{}\n{r}\n", header()).as_bytes()).unwrap();
        assert_eq!(ds.stats.empty_cells, 1);
        assert!(is_missing(&ds.encounters[0].payer_code));
    }

    #[test]
    fn flat_mapping_rows() {
        let text = "admission_type_id,1,Emergency\n\
                    discharge_disposition_id,3,Discharged or Transferred to Skilled Nursing Facility (SNF)\n";
        let maps = read_id_mappings(text.as_bytes()).unwrap();
        assert_eq!(
            maps[0],
            IdMapping {
                table: MappingTable::AdmissionType,
                id: 1,
                description: "Emergency".into()
            }
        );
        assert!(maps[1].description.contains("Skilled Nursing Facility"));
    }

    #[test]
    fn sectioned_mapping_layout() {
        let text = "admission_type_id,description\n1,Emergency\n2,Urgent\n,\n\
                    discharge_disposition_id,description\n1,Discharged to home\n\
                    3,Discharged/transferred to SNF\n,\n\
                    admission_source_id,description\n7, Emergency Room\n";
        let maps = IdMappings::from_entries(read_id_mappings(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(maps.len(), 5);
        assert_eq!(maps.describe(MappingTable::AdmissionSource, "7"), Some("Emergency Room"));
        assert_eq!(
            maps.describe(MappingTable::DischargeDisposition, "3"),
            Some("Discharged/transferred to SNF")
        );
        for t in MappingTable::ALL {
            assert!(maps.iter().any(|m| m.table == t));
        }
    }

    #[test]
    fn empty_mapping_file() {
        assert!(read_id_mappings(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_mapping_rejected() {
        let text = "admission_type_id,1,Emergency\nadmission_type_id,1,Urgent\n";
        assert!(matches!(
            read_id_mappings(text.as_bytes()),
            Err(Error::DuplicateMapping { id: 1, .. })
        ));
    }
}

#[cfg(test)]
pub(crate) use tests::{header as test_header, row as test_row};

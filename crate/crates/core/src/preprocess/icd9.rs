//! ICD-9 diagnosis grouping.
//!
//! Codes are mapped onto the disease families commonly used with this
//! dataset: circulatory 390–459 and 785, respiratory 460–519 and 786,
//! digestive 520–579 and 787, diabetes 250.xx, injury 800–999,
//! musculoskeletal 710–739, genitourinary 580–629 and 788, neoplasms
//! 140–239, everything else (including the V and E supplementary codes)
//! as "Other". A tenth group, "Missing", holds the `?` marker so the
//! mapping stays total on unfiltered data.
//!
//! Note: the respiratory block is sometimes quoted as starting at 450.
//! 450–459 are diseases of veins and lymphatics and belong to the
//! circulatory chapter, so this table starts respiratory at 460.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::is_missing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosisGroup {
    Circulatory,
    Respiratory,
    Digestive,
    Diabetes,
    Injury,
    Musculoskeletal,
    Genitourinary,
    Neoplasms,
    Other,
    Missing,
}

impl DiagnosisGroup {
    pub const ALL: [DiagnosisGroup; 10] = [
        DiagnosisGroup::Circulatory,
        DiagnosisGroup::Respiratory,
        DiagnosisGroup::Digestive,
        DiagnosisGroup::Diabetes,
        DiagnosisGroup::Injury,
        DiagnosisGroup::Musculoskeletal,
        DiagnosisGroup::Genitourinary,
        DiagnosisGroup::Neoplasms,
        DiagnosisGroup::Other,
        DiagnosisGroup::Missing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiagnosisGroup::Circulatory => "Circulatory",
            DiagnosisGroup::Respiratory => "Respiratory",
            DiagnosisGroup::Digestive => "Digestive",
            DiagnosisGroup::Diabetes => "Diabetes",
            DiagnosisGroup::Injury => "Injury",
            DiagnosisGroup::Musculoskeletal => "Musculoskeletal",
            DiagnosisGroup::Genitourinary => "Genitourinary",
            DiagnosisGroup::Neoplasms => "Neoplasms",
            DiagnosisGroup::Other => "Other",
            DiagnosisGroup::Missing => "Missing",
        }
    }
}

impl fmt::Display for DiagnosisGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagnosisGroup {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|g| g.name() == s).ok_or(())
    }
}

/// Result of grouping one code. `parsed` is false when the code was neither
/// missing, a V/E code, nor numeric, in which case the group is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grouping {
    pub group: DiagnosisGroup,
    pub parsed: bool,
}

pub fn group_icd9(code: &str) -> Grouping {
    let code = code.trim();
    if is_missing(code) {
        return Grouping {
            group: DiagnosisGroup::Missing,
            parsed: true,
        };
    }
    if code.starts_with(['V', 'v', 'E', 'e']) {
        return Grouping {
            group: DiagnosisGroup::Other,
            parsed: true,
        };
    }
    let Ok(value) = code.parse::<f64>() else {
        return Grouping {
            group: DiagnosisGroup::Other,
            parsed: false,
        };
    };
    if !value.is_finite() || value < 0.0 {
        return Grouping {
            group: DiagnosisGroup::Other,
            parsed: false,
        };
    }
    let chapter = value.floor() as u32;
    use DiagnosisGroup::*;
    let group = match chapter {
        250 => Diabetes,
        390..=459 | 785 => Circulatory,
        460..=519 | 786 => Respiratory,
        520..=579 | 787 => Digestive,
        800..=999 => Injury,
        710..=739 => Musculoskeletal,
        580..=629 | 788 => Genitourinary,
        140..=239 => Neoplasms,
        _ => Other,
    };
    Grouping {
        group,
        parsed: true,
    }
}

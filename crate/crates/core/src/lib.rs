//! Readmission-risk analysis for diabetic patient encounters.
//!
//! The crate covers the whole batch pipeline: loading the encounter table,
//! preprocessing into 22 risk factors, five classifiers behind one scoring
//! contract, precision-recall evaluation, ablation feature importance,
//! class-sensitive association rules and cost-sensitive threshold selection.

pub mod config;
pub mod cost;
pub mod error;
pub mod eval;
pub mod feature_analysis;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rules;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};

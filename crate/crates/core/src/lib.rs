//! Turns discharge reports plus coded EHR tables into enriched, labeled
//! tabular datasets for early-prediction studies of atrial fibrillation
//! progression.
//!
//! The stages mirror a batch pipeline:
//!
//! 1. [`cohort`] selects AF-onset patients from coded diagnoses and checks
//!    them against the report text.
//! 2. [`report2vector`] and [`structured2vector`] extract the same predictive
//!    features from each source at the onset date.
//! 3. [`merger`] fuses the two vectors, keeping provenance and logging
//!    conflicts.
//! 4. [`labeler`] rebuilds the arrhythmia timeline and assigns a silver
//!    progression label.
//! 5. [`scores`], [`baseline`] and [`eval`] produce the comparison metrics.
//!
//! [`synthgen`] generates corpora with planted ground truth, and
//! [`pipeline`] wires the stages together through files.
//!
//! Per-patient work runs on rayon when the `parallel` feature is enabled
//! (the default); see [`par`].

pub mod baseline;
pub mod cohort;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod labeler;
pub mod merger;
pub mod par;
pub mod pipeline;
pub mod report2vector;
pub mod resources;
pub mod schema;
pub mod scores;
pub mod structured2vector;
pub mod synthgen;
pub mod text;
pub mod vector;

pub use error::{Error, Result};
pub use schema::{Category, FeatureDef, FeatureSchema, ValueKind};
pub use vector::{FeatureValue, PatientVector, Provenance, Value};

/// Calendar date at day granularity, used for every date in the pipeline.
pub type Date = chrono::NaiveDate;

/// Parses an ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_date(s: &str) -> Option<Date> {
    Date::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

//! Report2Vector: discharge reports to patient vectors through section
//! segmentation, lexicon entity recognition with negation, and regex value
//! extraction.

mod lexicon;
mod patterns;
mod sections;

use std::collections::HashMap;

pub use lexicon::{
    detect_entities, Concept, EntityMention, Lexicon, Polarity, AF_FEATURE, NEGATION_WINDOW,
    SINUS_RHYTHM,
};
pub use patterns::{extract_patterns, parse_number, PatternSet, PatternSpec, Scale};
pub use sections::{segment_sections, HeaderTable, Section, SectionKind};

use crate::ingest::ReportDocument;
use crate::schema::{FeatureSchema, ValueKind};
use crate::vector::{PatientVector, Provenance, Value};
use crate::{Date, Error, Result};

/// Everything the text pipeline needs, loaded once per run.
#[derive(Debug, Clone)]
pub struct TextResources {
    pub headers: HeaderTable,
    pub lexicon: Lexicon,
    pub patterns: PatternSet,
}

impl TextResources {
    pub fn default_for(schema: &FeatureSchema) -> Self {
        TextResources {
            headers: HeaderTable::default(),
            lexicon: Lexicon::default_for(schema),
            patterns: PatternSet::default_for(schema),
        }
    }

    /// Segments a report and runs entity and pattern extraction over every
    /// section.
    pub fn analyze(&self, report: &ReportDocument) -> AnalyzedReport {
        let sections = if report.sections.is_empty() {
            segment_sections(&report.text, &self.headers)
        } else {
            report.sections.clone()
        };
        let mut mentions = Vec::new();
        let mut values: Vec<(String, f64)> = Vec::new();
        for s in &sections {
            mentions.extend(detect_entities(&report.text, s, &self.lexicon));
            for (f, v) in extract_patterns(&report.text, s, &self.patterns) {
                values.retain(|(g, _)| *g != f);
                values.push((f, v));
            }
        }
        AnalyzedReport {
            patient_id: report.patient_id.clone(),
            report_id: report.report_id.clone(),
            date: report.date,
            sections,
            mentions,
            values,
        }
    }
}

/// One report after text processing.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedReport {
    pub patient_id: String,
    pub report_id: String,
    pub date: Date,
    pub sections: Vec<Section>,
    pub mentions: Vec<EntityMention>,
    /// Numeric values, last occurrence per feature, in document order.
    pub values: Vec<(String, f64)>,
}

impl AnalyzedReport {
    /// Affirmed AF mentions outside the past-history section.
    pub fn current_af_mentions(&self) -> impl Iterator<Item = &EntityMention> {
        self.mentions
            .iter()
            .filter(|m| m.is_af() && m.is_affirmed() && m.section_kind != SectionKind::PastHistory)
    }

    pub fn history_af_mentions(&self) -> impl Iterator<Item = &EntityMention> {
        self.mentions
            .iter()
            .filter(|m| m.is_af() && m.is_affirmed() && m.section_kind == SectionKind::PastHistory)
    }
}

/// Builds one patient's report vector at `index_date`.
///
/// Reports dated after the index date are ignored. Tri-state features are
/// Present on any affirmed mention, Absent when only negated mentions exist.
/// Numeric and categorical features take the most recent value. The label
/// slot is left Unknown.
pub fn report_to_vector(
    patient_id: &str,
    reports: &[ReportDocument],
    schema: &FeatureSchema,
    resources: &TextResources,
    index_date: Date,
) -> Result<PatientVector> {
    if let Some(other) = reports.iter().find(|r| r.patient_id != patient_id) {
        return Err(Error::MixedPatients(patient_id.to_string(), other.patient_id.clone()));
    }
    let analyzed: Vec<AnalyzedReport> = reports
        .iter()
        .filter(|r| r.date <= index_date)
        .map(|r| resources.analyze(r))
        .collect();
    Ok(vector_from_analyzed(patient_id, analyzed, schema, index_date))
}

/// Same as [`report_to_vector`] over already analyzed reports.
pub fn vector_from_analyzed(
    patient_id: &str,
    mut analyzed: Vec<AnalyzedReport>,
    schema: &FeatureSchema,
    index_date: Date,
) -> PatientVector {
    analyzed.retain(|r| r.date <= index_date);
    analyzed.sort_by(|a, b| (a.date, &a.report_id).cmp(&(b.date, &b.report_id)));

    #[derive(Default)]
    struct Flag {
        affirmed: bool,
        negated: bool,
    }
    let mut flags: HashMap<&str, Flag> = HashMap::new();
    let mut latest: HashMap<&str, Value> = HashMap::new();
    for r in &analyzed {
        for m in &r.mentions {
            let Some(def) = schema.get(&m.feature_id) else { continue };
            match (def.value_kind, &m.value) {
                (ValueKind::Boolean3State, _) => {
                    let f = flags.entry(def.id.as_str()).or_default();
                    match m.polarity {
                        Polarity::Affirmed => f.affirmed = true,
                        Polarity::Negated => f.negated = true,
                    }
                }
                (ValueKind::Categorical, Some(v)) if m.is_affirmed() => {
                    latest.insert(def.id.as_str(), Value::Category(v.clone()));
                }
                _ => {}
            }
        }
        for (f, v) in &r.values {
            if let Some(def) = schema.get(f) {
                latest.insert(def.id.as_str(), Value::Number(*v));
            }
        }
    }

    let mut vector = PatientVector::empty(patient_id, schema);
    for def in schema.predictive() {
        let value = match def.value_kind {
            ValueKind::Boolean3State => match flags.get(def.id.as_str()) {
                Some(f) if f.affirmed => Value::Present,
                Some(f) if f.negated => Value::Absent,
                _ => Value::Unknown,
            },
            _ => latest.remove(def.id.as_str()).unwrap_or(Value::Unknown),
        };
        vector.set(schema, &def.id, value, Provenance::Report);
    }
    vector
}

//! VectorMerger: fuses structured and report vectors into one enriched
//! vector, recording where every value came from.

use serde::{Deserialize, Serialize};

use crate::schema::FeatureSchema;
use crate::vector::{FeatureValue, PatientVector, Provenance, Value};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Precedence {
    #[default]
    StructuredFirst,
    ReportFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergePolicy {
    pub precedence: Precedence,
    /// Relative difference above which two numbers disagree.
    pub numeric_conflict_tolerance: f64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy {
            precedence: Precedence::StructuredFirst,
            numeric_conflict_tolerance: 0.05,
        }
    }
}

impl MergePolicy {
    pub fn validate(&self) -> Result<()> {
        let t = self.numeric_conflict_tolerance;
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "numeric_conflict_tolerance must be >= 0, got {}",
                self.numeric_conflict_tolerance
            )));
        }
        Ok(())
    }
}

/// Both sources known and disagreeing on one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub patient_id: String,
    pub feature_id: String,
    pub structured_value: Value,
    pub report_value: Value,
    pub resolution: Provenance,
}

fn agree(a: &Value, b: &Value, tolerance: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let scale = x.abs().max(y.abs());
            scale == 0.0 || (x - y).abs() / scale <= tolerance
        }
        _ => a == b,
    }
}

fn union(a: Provenance, b: Provenance) -> Provenance {
    match (a, b) {
        (x, Provenance::None) | (Provenance::None, x) => x,
        (x, y) if x == y => x,
        _ => Provenance::Both,
    }
}

/// Merges a structured vector with a report vector.
///
/// A feature known in only one source is copied. Agreeing values take the
/// precedence source's value and the union of provenances. Disagreeing
/// values take the precedence source and are logged as a [`Conflict`].
pub fn merge(
    structured: &PatientVector,
    report: &PatientVector,
    schema: &FeatureSchema,
    policy: &MergePolicy,
) -> Result<(PatientVector, Vec<Conflict>)> {
    if structured.patient_id != report.patient_id {
        return Err(Error::PatientMismatch(
            structured.patient_id.clone(),
            report.patient_id.clone(),
        ));
    }
    for v in [structured, report] {
        if v.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "patient {}: {} slots, schema has {}",
                v.patient_id,
                v.values.len(),
                schema.len()
            )));
        }
    }
    let mut conflicts = Vec::new();
    let values = structured
        .values
        .iter()
        .zip(&report.values)
        .zip(schema.features())
        .map(|((s, r), def)| {
            let (first, second) = match policy.precedence {
                Precedence::StructuredFirst => (s, r),
                Precedence::ReportFirst => (r, s),
            };
            match (s.is_unknown(), r.is_unknown()) {
                (true, true) => FeatureValue::UNKNOWN,
                (false, true) => s.clone(),
                (true, false) => r.clone(),
                (false, false) if agree(&s.value, &r.value, policy.numeric_conflict_tolerance) => {
                    FeatureValue::new(first.value.clone(), union(first.provenance, second.provenance))
                }
                (false, false) => {
                    conflicts.push(Conflict {
                        patient_id: structured.patient_id.clone(),
                        feature_id: def.id.clone(),
                        structured_value: s.value.clone(),
                        report_value: r.value.clone(),
                        resolution: first.provenance,
                    });
                    first.clone()
                }
            }
        })
        .collect();
    Ok((
        PatientVector {
            patient_id: structured.patient_id.clone(),
            values,
        },
        conflicts,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::default_schema()
    }

    fn with(schema: &FeatureSchema, id: &str, value: Value, prov: Provenance) -> PatientVector {
        let mut v = PatientVector::empty("P1", schema);
        v.set(schema, id, value, prov);
        v
    }

    #[test]
    fn fill_from_report() {
        let s = schema();
        let sv = PatientVector::empty("P1", &s);
        let rv = with(&s, "albumin", Value::Number(3.5), Provenance::Report);
        let (m, c) = merge(&sv, &rv, &s, &MergePolicy::default()).unwrap();
        assert_eq!(m.get(&s, "albumin").unwrap(), &FeatureValue::new(Value::Number(3.5), Provenance::Report));
        assert!(c.is_empty());
    }

    #[test]
    fn numeric_conflict_keeps_structured() {
        let s = schema();
        let sv = with(&s, "albumin", Value::Number(4.0), Provenance::Structured);
        let rv = with(&s, "albumin", Value::Number(3.5), Provenance::Report);
        let (m, c) = merge(&sv, &rv, &s, &MergePolicy::default()).unwrap();
        assert_eq!(m.value(&s, "albumin"), &Value::Number(4.0));
        assert_eq!(m.get(&s, "albumin").unwrap().provenance, Provenance::Structured);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].feature_id, "albumin");
        assert_eq!(c[0].resolution, Provenance::Structured);

        let report_first = MergePolicy { precedence: Precedence::ReportFirst, ..Default::default() };
        let (m, c) = merge(&sv, &rv, &s, &report_first).unwrap();
        assert_eq!(m.value(&s, "albumin"), &Value::Number(3.5));
        assert_eq!(c[0].resolution, Provenance::Report);
    }

    #[test]
    fn within_tolerance_agrees() {
        let s = schema();
        let sv = with(&s, "sodium", Value::Number(140.0), Provenance::Structured);
        let rv = with(&s, "sodium", Value::Number(137.0), Provenance::Report);
        let (m, c) = merge(&sv, &rv, &s, &MergePolicy::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(m.get(&s, "sodium").unwrap(), &FeatureValue::new(Value::Number(140.0), Provenance::Both));
    }

    #[test]
    fn both_unknown_stays_unknown() {
        let s = schema();
        let e = PatientVector::empty("P1", &s);
        let (m, c) = merge(&e, &e, &s, &MergePolicy::default()).unwrap();
        assert_eq!(m, e);
        assert!(c.is_empty());
    }

    #[test]
    fn present_vs_absent_is_conflict() {
        let s = schema();
        let sv = with(&s, "copd", Value::Present, Provenance::Structured);
        let rv = with(&s, "copd", Value::Absent, Provenance::Report);
        let (m, c) = merge(&sv, &rv, &s, &MergePolicy::default()).unwrap();
        assert_eq!(m.value(&s, "copd"), &Value::Present);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn mismatches_rejected() {
        let s = schema();
        let a = PatientVector::empty("P1", &s);
        let b = PatientVector::empty("P2", &s);
        assert!(matches!(merge(&a, &b, &s, &MergePolicy::default()), Err(Error::PatientMismatch(..))));
        let mut short = a.clone();
        short.values.pop();
        assert!(matches!(merge(&a, &short, &s, &MergePolicy::default()), Err(Error::SchemaMismatch(_))));
    }

    fn arb_slot(kind: usize) -> impl Strategy<Value = Value> {
        match kind {
            0 => prop_oneof![Just(Value::Unknown), Just(Value::Present), Just(Value::Absent)].boxed(),
            _ => prop_oneof![
                Just(Value::Unknown),
                (1u32..50).prop_map(|x| Value::Number(x as f64 / 10.0)),
            ]
            .boxed(),
        }
    }

    fn arb_vector(prov: Provenance) -> impl Strategy<Value = PatientVector> {
        let s = schema();
        let ids: Vec<(String, usize)> = ["hypertension", "copd", "diabetes", "albumin", "crp", "lvef"]
            .iter()
            .map(|id| (id.to_string(), usize::from(s.get(id).unwrap().value_kind != crate::ValueKind::Boolean3State)))
            .collect();
        let strategies: Vec<_> = ids.iter().map(|(_, k)| arb_slot(*k)).collect();
        strategies.prop_map(move |vals| {
            let mut v = PatientVector::empty("P1", &s);
            for ((id, _), val) in ids.iter().zip(vals) {
                v.set(&s, id, val, prov);
            }
            v
        })
    }

    proptest! {
        #[test]
        fn merge_properties(sv in arb_vector(Provenance::Structured), rv in arb_vector(Provenance::Report)) {
            let s = schema();
            let policy = MergePolicy::default();
            let (m, c) = merge(&sv, &rv, &s, &policy).unwrap();
            m.check_conforms(&s).unwrap();
            // enrichment monotonicity
            for i in 0..s.len() {
                if m.values[i].is_unknown() {
                    prop_assert!(sv.values[i].is_unknown() && rv.values[i].is_unknown());
                }
            }
            // identity with an empty vector
            let empty = PatientVector::empty("P1", &s);
            prop_assert_eq!(&merge(&sv, &empty, &s, &policy).unwrap().0, &sv);
            // idempotence under StructuredFirst
            prop_assert_eq!(&merge(&m, &rv, &s, &policy).unwrap().0, &m);
            // conflict set independent of precedence
            let rf = MergePolicy { precedence: Precedence::ReportFirst, ..policy };
            let (_, c2) = merge(&sv, &rv, &s, &rf).unwrap();
            let ids = |c: &[Conflict]| c.iter().map(|x| x.feature_id.clone()).collect::<Vec<_>>();
            prop_assert_eq!(ids(&c), ids(&c2));
        }
    }
}

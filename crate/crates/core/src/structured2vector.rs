//! Structured2Vector: the same predictive features from coded EHR tables.
//!
//! Coded data can only show that something was recorded, so tri-state
//! features come out Present or Unknown, never Absent.

use std::collections::HashMap;
use std::path::Path;

use chrono::Datelike;

use crate::ingest::StructuredStore;
use crate::report2vector::{parse_number, Scale, AF_FEATURE};
use crate::schema::{FeatureSchema, ValueKind};
use crate::vector::{PatientVector, Provenance, Value};
use crate::{Date, Error, Result};

/// Upper-cases and drops dots, so `I48.0` and `i480` compare equal.
pub fn normalize_code(code: &str) -> String {
    code.chars()
        .filter(|c| *c != '.' && !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct PrefixRule {
    system: String,
    prefix: String,
    code: String,
    feature_id: String,
    value: Option<String>,
    numeric: Option<(String, Scale)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabRule {
    pub feature_id: String,
    pub unit: String,
    pub scale: Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Diagnosis,
    Prescription,
    Procedure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappedCode<'a> {
    pub kind: CodeKind,
    pub system: &'a str,
    pub code: &'a str,
    /// Outcome scale for numeric procedure targets.
    pub scale: Option<Scale>,
}

/// Code-to-feature mapping for diagnoses, prescriptions, procedures and labs.
#[derive(Debug, Clone, Default)]
pub struct CodeMap {
    dx: Vec<PrefixRule>,
    rx: Vec<PrefixRule>,
    procs: Vec<PrefixRule>,
    labs: HashMap<String, LabRule>,
}

impl CodeMap {
    pub fn default_for(schema: &FeatureSchema) -> Self {
        Self::parse(crate::resources::CODE_MAP, schema).expect("shipped code map is valid")
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, schema)
    }

    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut map = CodeMap::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse("code_map", line_no, m);
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let feature = |id: &str| -> Result<ValueKind> {
                schema
                    .get(id)
                    .map(|d| d.value_kind)
                    .ok_or_else(|| err(format!("feature `{id}` not in schema")))
            };
            match cols.as_slice() {
                ["DX", system, prefix, id, rest @ ..] | ["RX", system, prefix, id, rest @ ..] => {
                    let kind = feature(id)?;
                    let value = match (kind, rest) {
                        (ValueKind::Boolean3State, []) => None,
                        (ValueKind::Categorical, [v]) => {
                            let allowed = schema.get(id).and_then(|d| d.allowed_values.as_ref());
                            if !allowed.is_some_and(|a| a.iter().any(|x| x == v)) {
                                return Err(err(format!("value `{v}` not allowed for `{id}`")));
                            }
                            Some(v.to_string())
                        }
                        _ => return Err(err(format!("bad target for `{id}`"))),
                    };
                    let rule = PrefixRule {
                        system: system.to_uppercase(),
                        prefix: normalize_code(prefix),
                        code: prefix.to_string(),
                        feature_id: id.to_string(),
                        value,
                        numeric: None,
                    };
                    if cols[0] == "DX" { map.dx.push(rule) } else { map.rx.push(rule) }
                }
                ["PROC", prefix, id, rest @ ..] => {
                    let kind = feature(id)?;
                    let numeric = match (kind, rest) {
                        (ValueKind::Boolean3State, []) => None,
                        (ValueKind::Numeric, [unit, scale]) => {
                            Some((unit.to_string(), scale.parse().map_err(err)?))
                        }
                        _ => return Err(err(format!("bad target for `{id}`"))),
                    };
                    map.procs.push(PrefixRule {
                        system: String::new(),
                        prefix: normalize_code(prefix),
                        code: prefix.to_string(),
                        feature_id: id.to_string(),
                        value: None,
                        numeric,
                    });
                }
                ["LAB", test_code, id, unit, scale] => {
                    if feature(id)? != ValueKind::Numeric {
                        return Err(err(format!("lab target `{id}` is not numeric")));
                    }
                    let rule = LabRule {
                        feature_id: id.to_string(),
                        unit: unit.to_string(),
                        scale: scale.parse().map_err(err)?,
                    };
                    if map.labs.insert(test_code.to_uppercase(), rule).is_some() {
                        return Err(err(format!("duplicate lab code `{test_code}`")));
                    }
                }
                _ => return Err(err("unrecognized code map line".into())),
            }
        }
        for rules in [&map.dx, &map.rx, &map.procs] {
            check_unambiguous(rules)?;
        }
        Ok(map)
    }

    fn find<'a>(rules: &'a [PrefixRule], system: &str, code: &str) -> Option<&'a PrefixRule> {
        let code = normalize_code(code);
        rules
            .iter()
            .find(|r| (r.system.is_empty() || r.system.eq_ignore_ascii_case(system)) && code.starts_with(&r.prefix))
    }

    /// Whether a diagnosis code marks atrial fibrillation.
    pub fn is_af_diagnosis(&self, system: &str, code: &str) -> bool {
        Self::find(&self.dx, system, code).is_some_and(|r| r.feature_id == AF_FEATURE)
    }

    pub fn lab(&self, test_code: &str) -> Option<&LabRule> {
        self.labs.get(&test_code.to_uppercase())
    }

    /// First code, as written in the map, that records `feature_id` (with
    /// `value` for categorical targets).
    pub fn code_for(&self, feature_id: &str, value: Option<&str>) -> Option<MappedCode<'_>> {
        fn pick<'a>(rules: &'a [PrefixRule], kind: CodeKind, feature_id: &str, value: Option<&str>) -> Option<MappedCode<'a>> {
            rules
                .iter()
                .find(|r| r.feature_id == feature_id && r.value.as_deref() == value)
                .map(|r| MappedCode {
                    kind,
                    system: &r.system,
                    code: &r.code,
                    scale: r.numeric.as_ref().map(|(_, s)| *s),
                })
        }
        pick(&self.dx, CodeKind::Diagnosis, feature_id, value)
            .or_else(|| pick(&self.rx, CodeKind::Prescription, feature_id, value))
            .or_else(|| pick(&self.procs, CodeKind::Procedure, feature_id, value))
    }

    /// Lab test code and rule for a numeric feature, smallest code first.
    pub fn lab_for(&self, feature_id: &str) -> Option<(&str, &LabRule)> {
        self.labs
            .iter()
            .filter(|(_, r)| r.feature_id == feature_id)
            .min_by(|a, b| a.0.cmp(b.0))
            .map(|(c, r)| (c.as_str(), r))
    }

    /// Features this map can ever fill.
    pub fn mapped_features(&self) -> impl Iterator<Item = &str> {
        self.dx
            .iter()
            .chain(&self.rx)
            .chain(&self.procs)
            .map(|r| r.feature_id.as_str())
            .chain(self.labs.values().map(|l| l.feature_id.as_str()))
    }
}

fn check_unambiguous(rules: &[PrefixRule]) -> Result<()> {
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            let same_target = a.feature_id == b.feature_id && a.value == b.value;
            if a.system == b.system
                && !same_target
                && (a.prefix.starts_with(&b.prefix) || b.prefix.starts_with(&a.prefix))
            {
                return Err(Error::parse(
                    "code_map",
                    0,
                    format!(
                        "ambiguous prefixes `{}` ({}) and `{}` ({})",
                        a.prefix, a.feature_id, b.prefix, b.feature_id
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Completed years between `birth` and `index`.
pub fn age_at(birth: Date, index: Date) -> Result<u32> {
    if birth > index {
        return Err(Error::FutureBirthDate { birth, index });
    }
    let mut years = index.year() - birth.year();
    if (index.month(), index.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    Ok(years as u32)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StructuredOptions {
    /// Ignore lab rows older than this many days before the index date.
    pub lab_lookback_days: Option<u32>,
}

/// Builds one patient's structured vector at `index_date`. Rows dated after
/// the index date never contribute.
pub fn structured_to_vector(
    store: &StructuredStore,
    patient_id: &str,
    schema: &FeatureSchema,
    code_map: &CodeMap,
    index_date: Date,
    options: StructuredOptions,
) -> Result<PatientVector> {
    let rec = store
        .patient(patient_id)
        .ok_or_else(|| Error::UnknownPatient(patient_id.to_string()))?;
    let mut v = PatientVector::empty(patient_id, schema);
    let src = Provenance::Structured;

    let age = age_at(rec.demographics.birth_date, index_date)?;
    v.set(schema, "age", Value::Number(age as f64), src);
    if let Some(sex) = &rec.demographics.sex {
        let value = Value::Category(sex.clone());
        if schema.get("sex").is_some_and(|d| value.fits(d)) {
            v.set(schema, "sex", value, src);
        } else {
            log::warn!("patient {patient_id}: unrecognized sex `{sex}`");
        }
    }

    let apply_rule = |v: &mut PatientVector, rule: &PrefixRule, outcome: Option<&str>| {
        let value = match (&rule.value, &rule.numeric) {
            (Some(cat), _) => Value::Category(cat.clone()),
            (None, Some((_, scale))) => match outcome.and_then(parse_number) {
                Some(x) => Value::Number(scale.apply(x)),
                None => return,
            },
            (None, None) => Value::Present,
        };
        v.set(schema, &rule.feature_id, value, src);
    };
    // Rows are date-sorted, so later rows overwrite earlier ones.
    for row in rec.diagnoses.iter().filter(|r| r.date <= index_date) {
        if let Some(rule) = CodeMap::find(&code_map.dx, &row.code_system, &row.code) {
            apply_rule(&mut v, rule, None);
        }
    }
    for row in rec.prescriptions.iter().filter(|r| r.date <= index_date) {
        if let Some(rule) = CodeMap::find(&code_map.rx, "ATC", &row.atc_code) {
            apply_rule(&mut v, rule, None);
        }
    }
    for row in rec.procedures.iter().filter(|r| r.date <= index_date) {
        if let Some(rule) = CodeMap::find(&code_map.procs, "", &row.code) {
            apply_rule(&mut v, rule, row.outcome.as_deref());
        }
    }
    let earliest = options
        .lab_lookback_days
        .map(|d| index_date - chrono::Duration::days(d as i64));
    for row in rec
        .labs
        .iter()
        .filter(|r| r.date <= index_date && earliest.is_none_or(|e| r.date >= e))
    {
        let Some(rule) = code_map.lab(&row.test_code) else { continue };
        if !rule.unit.eq_ignore_ascii_case(row.unit.trim()) {
            log::warn!(
                "patient {patient_id}: lab {} in unit `{}`, expected `{}`; skipped",
                row.test_code,
                row.unit,
                rule.unit
            );
            continue;
        }
        v.set(schema, &rule.feature_id, Value::Number(rule.scale.apply(row.value)), src);
    }
    Ok(v)
}

//! CHA2DS2-VASc, HATCH and APPLE computed from a patient vector.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::FeatureSchema;
use crate::vector::{PatientVector, Value};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreName {
    Chads2Vasc,
    Hatch,
    Apple,
}

impl ScoreName {
    pub const ALL: [ScoreName; 3] = [ScoreName::Chads2Vasc, ScoreName::Hatch, ScoreName::Apple];

    pub fn max_points(self) -> u32 {
        match self {
            ScoreName::Chads2Vasc => 9,
            ScoreName::Hatch => 7,
            ScoreName::Apple => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreName::Chads2Vasc => "chads2vasc",
            ScoreName::Hatch => "hatch",
            ScoreName::Apple => "apple",
        }
    }

    pub fn compute(self, v: &PatientVector, schema: &FeatureSchema) -> Result<ScoreResult> {
        match self {
            ScoreName::Chads2Vasc => chads2vasc(v, schema),
            ScoreName::Hatch => hatch(v, schema),
            ScoreName::Apple => apple(v, schema),
        }
    }
}

impl fmt::Display for ScoreName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub score_name: ScoreName,
    pub points: u32,
    pub known_components: u32,
    pub prediction: bool,
}

impl ScoreResult {
    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.prediction = binarize(self.points, threshold);
        self
    }
}

pub fn binarize(points: u32, threshold: u32) -> bool {
    points >= threshold
}

/// Accumulates components; `None` means the component is unknown.
struct Tally {
    name: ScoreName,
    points: u32,
    known: u32,
}

impl Tally {
    fn new(name: ScoreName) -> Self {
        Tally { name, points: 0, known: 0 }
    }

    fn add(&mut self, hit: Option<bool>, points: u32) {
        if let Some(hit) = hit {
            self.known += 1;
            if hit {
                self.points += points;
            }
        }
    }

    fn finish(self) -> ScoreResult {
        ScoreResult {
            score_name: self.name,
            points: self.points,
            known_components: self.known,
            prediction: binarize(self.points, DEFAULT_THRESHOLD),
        }
    }
}

fn flag(v: &PatientVector, schema: &FeatureSchema, id: &str) -> Option<bool> {
    match v.value(schema, id) {
        Value::Present => Some(true),
        Value::Absent => Some(false),
        _ => None,
    }
}

fn number(v: &PatientVector, schema: &FeatureSchema, id: &str) -> Option<f64> {
    v.value(schema, id).as_number()
}

fn age(v: &PatientVector, schema: &FeatureSchema, score: &'static str) -> Result<f64> {
    number(v, schema, "age").ok_or(Error::MissingAge(score))
}

pub fn chads2vasc(v: &PatientVector, schema: &FeatureSchema) -> Result<ScoreResult> {
    let age = age(v, schema, "chads2vasc")?;
    let mut t = Tally::new(ScoreName::Chads2Vasc);
    t.add(flag(v, schema, "heart_failure"), 1);
    t.add(flag(v, schema, "hypertension"), 1);
    t.add(Some(true), if age >= 75.0 { 2 } else if age >= 65.0 { 1 } else { 0 });
    t.add(flag(v, schema, "diabetes"), 1);
    t.add(flag(v, schema, "stroke_tia"), 2);
    t.add(flag(v, schema, "vascular_disease"), 1);
    t.add(v.value(schema, "sex").as_category().map(|s| s == "F"), 1);
    Ok(t.finish())
}

pub fn hatch(v: &PatientVector, schema: &FeatureSchema) -> Result<ScoreResult> {
    let age = age(v, schema, "hatch")?;
    let mut t = Tally::new(ScoreName::Hatch);
    t.add(flag(v, schema, "hypertension"), 1);
    t.add(Some(age > 75.0), 1);
    t.add(flag(v, schema, "stroke_tia"), 2);
    t.add(flag(v, schema, "copd"), 1);
    t.add(flag(v, schema, "heart_failure"), 2);
    Ok(t.finish())
}

pub fn apple(v: &PatientVector, schema: &FeatureSchema) -> Result<ScoreResult> {
    let age = age(v, schema, "apple")?;
    let mut t = Tally::new(ScoreName::Apple);
    t.add(Some(age > 65.0), 1);
    t.add(v.value(schema, "af_type").as_category().map(|c| c == "persistent"), 1);
    t.add(number(v, schema, "egfr").map(|x| x < 60.0), 1);
    t.add(number(v, schema, "la_diameter").map(|x| x >= 43.0), 1);
    t.add(number(v, schema, "lvef").map(|x| x < 50.0), 1);
    Ok(t.finish())
}

/// One row of `scores.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub patient_id: String,
    pub chads2vasc: u32,
    pub hatch: u32,
    pub apple: u32,
    #[serde(with = "bit")]
    pub chads2vasc_pred: bool,
    #[serde(with = "bit")]
    pub hatch_pred: bool,
    #[serde(with = "bit")]
    pub apple_pred: bool,
}

impl ScoreRow {
    pub fn compute(v: &PatientVector, schema: &FeatureSchema, threshold: u32) -> Result<ScoreRow> {
        let c = chads2vasc(v, schema)?.with_threshold(threshold);
        let h = hatch(v, schema)?.with_threshold(threshold);
        let a = apple(v, schema)?.with_threshold(threshold);
        Ok(ScoreRow {
            patient_id: v.patient_id.clone(),
            chads2vasc: c.points,
            hatch: h.points,
            apple: a.points,
            chads2vasc_pred: c.prediction,
            hatch_pred: h.prediction,
            apple_pred: a.prediction,
        })
    }

    pub fn prediction(&self, name: ScoreName) -> bool {
        match name {
            ScoreName::Chads2Vasc => self.chads2vasc_pred,
            ScoreName::Hatch => self.hatch_pred,
            ScoreName::Apple => self.apple_pred,
        }
    }
}

mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("expected 0/1, found {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::Provenance;

    fn patient(age: Option<f64>, sex: Option<&str>, present: &[&str], absent_rest: bool) -> (FeatureSchema, PatientVector) {
        let schema = FeatureSchema::default_schema();
        let mut v = PatientVector::empty("P1", &schema);
        if let Some(a) = age {
            v.set(&schema, "age", Value::Number(a), Provenance::Structured);
        }
        if let Some(s) = sex {
            v.set(&schema, "sex", Value::Category(s.into()), Provenance::Structured);
        }
        for id in ["heart_failure", "hypertension", "diabetes", "stroke_tia", "vascular_disease", "copd"] {
            if present.contains(&id) {
                v.set(&schema, id, Value::Present, Provenance::Structured);
            } else if absent_rest {
                v.set(&schema, id, Value::Absent, Provenance::Structured);
            }
        }
        (schema, v)
    }

    fn apple_patient(age: f64, af: &str, egfr: f64, la: Option<f64>, lvef: f64) -> ScoreResult {
        let (schema, mut v) = patient(Some(age), None, &[], true);
        v.set(&schema, "af_type", Value::Category(af.into()), Provenance::Report);
        v.set(&schema, "egfr", Value::Number(egfr), Provenance::Report);
        if let Some(la) = la {
            v.set(&schema, "la_diameter", Value::Number(la), Provenance::Report);
        }
        v.set(&schema, "lvef", Value::Number(lvef), Provenance::Report);
        apple(&v, &schema).unwrap()
    }

    #[test]
    fn chads2vasc_examples() {
        let (s, v) = patient(Some(76.0), Some("F"), &["hypertension"], true);
        assert_eq!(chads2vasc(&v, &s).unwrap().points, 4);
        let (s, v) = patient(Some(40.0), Some("M"), &[], true);
        let r = chads2vasc(&v, &s).unwrap();
        assert_eq!((r.points, r.known_components, r.prediction), (0, 7, false));
        let (s, v) = patient(Some(70.0), Some("M"), &["diabetes", "stroke_tia"], true);
        assert_eq!(chads2vasc(&v, &s).unwrap().points, 4);
    }

    #[test]
    fn hatch_examples() {
        let (s, v) = patient(Some(60.0), None, &["hypertension", "heart_failure"], true);
        assert_eq!(hatch(&v, &s).unwrap().points, 3);
        let (s, v) = patient(Some(80.0), None, &[], true);
        assert_eq!(hatch(&v, &s).unwrap().points, 1);
        let (s, v) = patient(Some(60.0), None, &[], true);
        assert_eq!(hatch(&v, &s).unwrap().points, 0);
    }

    #[test]
    fn apple_examples() {
        assert_eq!(apple_patient(70.0, "persistent", 45.0, Some(45.0), 40.0).points, 5);
        assert_eq!(apple_patient(50.0, "paroxysmal", 90.0, Some(38.0), 60.0).points, 0);
        let r = apple_patient(70.0, "paroxysmal", 90.0, None, 60.0);
        assert_eq!((r.points, r.known_components), (1, 4));
    }

    #[test]
    fn age_boundaries() {
        let pts = |f: fn(&PatientVector, &FeatureSchema) -> Result<ScoreResult>, age: f64| {
            let (s, v) = patient(Some(age), Some("M"), &[], true);
            f(&v, &s).unwrap().points
        };
        assert_eq!(pts(chads2vasc, 64.0), 0);
        assert_eq!(pts(chads2vasc, 65.0), 1);
        assert_eq!(pts(chads2vasc, 74.0), 1);
        assert_eq!(pts(chads2vasc, 75.0), 2);
        assert_eq!(pts(hatch, 75.0), 0);
        assert_eq!(pts(hatch, 76.0), 1);
        assert_eq!(pts(apple, 65.0), 0);
        assert_eq!(pts(apple, 66.0), 1);
    }

    #[test]
    fn missing_age_is_an_error() {
        let (s, v) = patient(None, Some("F"), &[], true);
        for name in ScoreName::ALL {
            assert!(matches!(name.compute(&v, &s), Err(Error::MissingAge(_))));
        }
    }

    #[test]
    fn unknown_components_count_zero() {
        let (s, v) = patient(Some(80.0), None, &[], false);
        let r = chads2vasc(&v, &s).unwrap();
        assert_eq!((r.points, r.known_components), (2, 1));
        let r = hatch(&v, &s).unwrap();
        assert_eq!((r.points, r.known_components), (1, 1));
    }

    const FLAGS: [&str; 6] = ["heart_failure", "hypertension", "diabetes", "stroke_tia", "vascular_disease", "copd"];

    /// Every tri-state combination with female/male sex and three age bands;
    /// checks the maxima and that flipping one flag to Present never lowers points.
    #[test]
    fn exhaustive_bounds_and_monotonicity() {
        let mut max = [0u32; 3];
        for mask in 0u32..(1 << FLAGS.len()) {
            for sex in ["F", "M"] {
                for age in [40.0, 66.0, 70.0, 80.0] {
                    let present: Vec<&str> = FLAGS.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, f)| *f).collect();
                    let mut af_variants = vec![];
                    for persistent in [false, true] {
                        let (s, mut v) = patient(Some(age), Some(sex), &present, true);
                        v.set(&s, "af_type", Value::Category(if persistent { "persistent" } else { "paroxysmal" }.into()), Provenance::Report);
                        v.set(&s, "egfr", Value::Number(if mask & 1 != 0 { 50.0 } else { 90.0 }), Provenance::Report);
                        v.set(&s, "la_diameter", Value::Number(if mask & 2 != 0 { 43.0 } else { 40.0 }), Provenance::Report);
                        v.set(&s, "lvef", Value::Number(if mask & 4 != 0 { 49.0 } else { 60.0 }), Provenance::Report);
                        af_variants.push((s, v));
                    }
                    for (s, v) in &af_variants {
                        for (k, name) in ScoreName::ALL.into_iter().enumerate() {
                            let base = name.compute(v, s).unwrap().points;
                            assert!(base <= name.max_points());
                            max[k] = max[k].max(base);
                            for f in FLAGS {
                                if v.value(s, f) == &Value::Absent {
                                    let mut up = v.clone();
                                    up.set(s, f, Value::Present, Provenance::Report);
                                    assert!(name.compute(&up, s).unwrap().points >= base, "{name} {f}");
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(max, [9, 7, 5]);
    }

    #[test]
    fn binarize_threshold() {
        assert!(binarize(2, DEFAULT_THRESHOLD));
        assert!(!binarize(1, DEFAULT_THRESHOLD));
        assert!(!binarize(0, DEFAULT_THRESHOLD));
        for p in 0..10 {
            assert!(!binarize(p, 2) || binarize(p + 1, 2));
        }
    }

    #[test]
    fn score_row_csv_uses_bits() {
        let (s, v) = patient(Some(76.0), Some("F"), &["hypertension"], true);
        let row = ScoreRow::compute(&v, &s, DEFAULT_THRESHOLD).unwrap();
        let mut w = csv::Writer::from_writer(vec![]);
        w.serialize(&row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(
            text,
            "patient_id,chads2vasc,hatch,apple,chads2vasc_pred,hatch_pred,apple_pred\nP1,4,2,1,1,1,0\n"
        );
    }
}

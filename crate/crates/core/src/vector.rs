//! Patient vectors: one value per schema slot, each tagged with provenance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::labeler::Label;
use crate::schema::{FeatureDef, FeatureSchema, ValueKind};
use crate::{Date, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Value {
    Unknown,
    Present,
    Absent,
    Number(f64),
    Category(String),
    Date(Date),
}

impl Value {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Value::Unknown)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            _ => None,
        }
    }

    /// Whether the value is admissible for a feature definition.
    pub fn fits(&self, def: &FeatureDef) -> bool {
        match (self, def.value_kind) {
            (Value::Unknown, _) => true,
            (Value::Present | Value::Absent, ValueKind::Boolean3State) => true,
            (Value::Number(x), ValueKind::Numeric) => x.is_finite(),
            (Value::Category(c), ValueKind::Categorical) => def
                .allowed_values
                .as_ref()
                .is_some_and(|allowed| allowed.iter().any(|a| a == c)),
            (Value::Date(_), ValueKind::Date) => true,
            _ => false,
        }
    }

    /// CSV cell text. Unknown is the empty cell; tri-state is `1`/`0`.
    pub fn to_cell(&self) -> String {
        match self {
            Value::Unknown => String::new(),
            Value::Present => "1".into(),
            Value::Absent => "0".into(),
            Value::Number(x) => format!("{x}"),
            Value::Category(c) => c.clone(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
        }
    }

    pub fn from_cell(kind: ValueKind, cell: &str) -> Result<Value, String> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(Value::Unknown);
        }
        match kind {
            ValueKind::Boolean3State => match cell {
                "1" => Ok(Value::Present),
                "0" => Ok(Value::Absent),
                other => Err(format!("expected 0/1, found `{other}`")),
            },
            ValueKind::Numeric => cell
                .parse::<f64>()
                .map(Value::Number)
                .map_err(|e| format!("bad number `{cell}`: {e}")),
            ValueKind::Categorical => Ok(Value::Category(cell.to_string())),
            ValueKind::Date => crate::parse_date(cell)
                .map(Value::Date)
                .ok_or_else(|| format!("bad date `{cell}`")),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unknown => f.write_str("Unknown"),
            other => f.write_str(&other.to_cell()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Structured,
    Report,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub value: Value,
    pub provenance: Provenance,
}

impl FeatureValue {
    pub const UNKNOWN: FeatureValue = FeatureValue {
        value: Value::Unknown,
        provenance: Provenance::None,
    };

    /// Builds a slot value; Unknown always carries provenance `None`.
    pub fn new(value: Value, provenance: Provenance) -> Self {
        if value.is_unknown() {
            Self::UNKNOWN
        } else {
            debug_assert!(provenance != Provenance::None, "known value without provenance");
            FeatureValue { value, provenance }
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.value.is_unknown()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientVector {
    pub patient_id: String,
    pub values: Vec<FeatureValue>,
}

impl PatientVector {
    /// A vector with every slot Unknown.
    pub fn empty(patient_id: impl Into<String>, schema: &FeatureSchema) -> Self {
        PatientVector {
            patient_id: patient_id.into(),
            values: vec![FeatureValue::UNKNOWN; schema.len()],
        }
    }

    pub fn get(&self, schema: &FeatureSchema, id: &str) -> Option<&FeatureValue> {
        schema.index_of(id).and_then(|i| self.values.get(i))
    }

    /// The slot's value, or `Unknown` when the id is not in the schema.
    pub fn value(&self, schema: &FeatureSchema, id: &str) -> &Value {
        self.get(schema, id).map_or(&Value::Unknown, |fv| &fv.value)
    }

    pub fn set(&mut self, schema: &FeatureSchema, id: &str, value: Value, provenance: Provenance) {
        let i = schema
            .index_of(id)
            .unwrap_or_else(|| panic!("feature `{id}` not in schema"));
        self.values[i] = FeatureValue::new(value, provenance);
    }

    pub fn label(&self, schema: &FeatureSchema) -> Option<Label> {
        self.values[schema.label_index()]
            .value
            .as_category()
            .and_then(|c| c.parse().ok())
    }

    pub fn set_label(&mut self, schema: &FeatureSchema, label: Option<Label>) {
        let i = schema.label_index();
        self.values[i] = match label {
            Some(l) => FeatureValue::new(Value::Category(l.code().to_string()), Provenance::Report),
            None => FeatureValue::UNKNOWN,
        };
    }

    /// Checks slot count, value kinds and the provenance invariant.
    pub fn check_conforms(&self, schema: &FeatureSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "patient {}: {} slots, schema has {}",
                self.patient_id,
                self.values.len(),
                schema.len()
            )));
        }
        for (fv, def) in self.values.iter().zip(schema.features()) {
            if !fv.value.fits(def) {
                return Err(Error::SchemaMismatch(format!(
                    "patient {}: value {} does not fit feature `{}`",
                    self.patient_id, fv.value, def.id
                )));
            }
            if fv.value.is_unknown() != (fv.provenance == Provenance::None) {
                return Err(Error::SchemaMismatch(format!(
                    "patient {}: provenance {:?} inconsistent with value of `{}`",
                    self.patient_id, fv.provenance, def.id
                )));
            }
        }
        Ok(())
    }

    pub fn unknown_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_unknown()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_forces_no_provenance() {
        let fv = FeatureValue::new(Value::Unknown, Provenance::Report);
        assert_eq!(fv.provenance, Provenance::None);
    }

    #[test]
    fn cells_round_trip() {
        let schema = FeatureSchema::default_schema();
        for (id, v) in [
            ("hypertension", Value::Present),
            ("hypertension", Value::Absent),
            ("albumin", Value::Number(3.5)),
            ("nt_probnp", Value::Number(1500.0)),
            ("af_type", Value::Category("persistent".into())),
            ("copd", Value::Unknown),
        ] {
            let def = schema.get(id).unwrap();
            assert!(v.fits(def));
            assert_eq!(Value::from_cell(def.value_kind, &v.to_cell()).unwrap(), v);
        }
    }

    #[test]
    fn conformance_catches_kind_and_provenance_errors() {
        let schema = FeatureSchema::default_schema();
        let mut v = PatientVector::empty("P1", &schema);
        v.check_conforms(&schema).unwrap();
        let i = schema.index_of("albumin").unwrap();
        v.values[i] = FeatureValue {
            value: Value::Present,
            provenance: Provenance::Report,
        };
        assert!(v.check_conforms(&schema).is_err());
        v.values[i] = FeatureValue {
            value: Value::Number(3.0),
            provenance: Provenance::None,
        };
        assert!(v.check_conforms(&schema).is_err());
        v.values.pop();
        assert!(matches!(v.check_conforms(&schema), Err(Error::SchemaMismatch(_))));
    }
}

//! Feature schema: the ordered list of the 85 dataset slots.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Id of the target slot. It is the last schema entry and is written as the
/// `label` column.
pub const LABEL_ID: &str = "af_progression";

/// Feature ids every schema must declare, because scores, cohort selection or
/// the enrichment report depend on them.
pub const REQUIRED_IDS: &[&str] = &[
    "age",
    "sex",
    "hypertension",
    "diabetes",
    "heart_failure",
    "stroke_tia",
    "vascular_disease",
    "copd",
    "egfr",
    "lvef",
    "la_diameter",
    "albumin",
    "crp",
    "nt_probnp",
    "af_type",
];

/// Expected number of features per category, in [`Category::ALL`] order.
pub const CATEGORY_COUNTS: [usize; 6] = [7, 35, 18, 7, 16, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Demographic,
    History,
    Lab,
    Procedure,
    Treatment,
    AfRelated,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Demographic,
        Category::History,
        Category::Lab,
        Category::Procedure,
        Category::Treatment,
        Category::AfRelated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Demographic => "Demographic",
            Category::History => "History",
            Category::Lab => "Lab",
            Category::Procedure => "Procedure",
            Category::Treatment => "Treatment",
            Category::AfRelated => "AfRelated",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueKind {
    Boolean3State,
    Numeric,
    Categorical,
    Date,
}

impl FromStr for ValueKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Boolean3State" => Ok(ValueKind::Boolean3State),
            "Numeric" => Ok(ValueKind::Numeric),
            "Categorical" => Ok(ValueKind::Categorical),
            "Date" => Ok(ValueKind::Date),
            other => Err(format!("unknown value kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub id: String,
    pub category: Category,
    pub value_kind: ValueKind,
    pub unit: Option<String>,
    pub allowed_values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub version: String,
    features: Vec<FeatureDef>,
    index: HashMap<String, usize>,
}

impl FeatureSchema {
    /// Builds and validates a schema.
    pub fn new(version: impl Into<String>, features: Vec<FeatureDef>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.id.clone(), i).is_some() {
                return Err(Error::SchemaInvariantViolation(format!(
                    "duplicate feature id `{}`",
                    f.id
                )));
            }
        }
        let schema = FeatureSchema {
            version: version.into(),
            features,
            index,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The schema shipped with the crate.
    pub fn default_schema() -> Self {
        Self::parse(crate::resources::SCHEMA).expect("shipped schema is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the declarative `id,category,value_kind,unit[,allowed]` text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut features = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("version=") {
                version = v.trim().to_string();
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if !(4..=5).contains(&cols.len()) {
                return Err(Error::parse(
                    "schema",
                    line_no,
                    format!("expected 4 or 5 fields, found {}", cols.len()),
                ));
            }
            if cols[0].is_empty() {
                return Err(Error::parse("schema", line_no, "empty feature id"));
            }
            let category = cols[1]
                .parse()
                .map_err(|e| Error::parse("schema", line_no, e))?;
            let value_kind = cols[2]
                .parse()
                .map_err(|e| Error::parse("schema", line_no, e))?;
            let unit = Some(cols[3]).filter(|u| !u.is_empty()).map(String::from);
            let allowed_values = cols
                .get(4)
                .filter(|s| !s.is_empty())
                .map(|s| s.split('|').map(|v| v.trim().to_string()).collect());
            features.push(FeatureDef {
                id: cols[0].to_string(),
                category,
                value_kind,
                unit,
                allowed_values,
            });
        }
        Self::new(version, features)
    }

    fn validate(&self) -> Result<()> {
        let violation = |msg: String| Err(Error::SchemaInvariantViolation(msg));
        if self.features.len() != 85 {
            return violation(format!(
                "expected 85 features, found {}",
                self.features.len()
            ));
        }
        for (cat, expected) in Category::ALL.into_iter().zip(CATEGORY_COUNTS) {
            let n = self.features.iter().filter(|f| f.category == cat).count();
            if n != expected {
                return violation(format!("category {cat}: expected {expected} features, found {n}"));
            }
        }
        match self.features.last() {
            Some(f) if f.id == LABEL_ID && f.category == Category::AfRelated => {}
            _ => return violation(format!("last feature must be the label slot `{LABEL_ID}`")),
        }
        for id in REQUIRED_IDS {
            if !self.index.contains_key(*id) {
                return violation(format!("required feature `{id}` missing"));
            }
        }
        for f in &self.features {
            match f.category {
                Category::Lab if f.value_kind != ValueKind::Numeric || f.unit.is_none() => {
                    return violation(format!("lab feature `{}` must be Numeric with a unit", f.id));
                }
                Category::History | Category::Treatment
                    if f.value_kind != ValueKind::Boolean3State =>
                {
                    return violation(format!("feature `{}` must be Boolean3State", f.id));
                }
                _ => {}
            }
            if f.value_kind == ValueKind::Categorical
                && f.allowed_values.as_ref().is_none_or(|v| v.is_empty())
            {
                return violation(format!("categorical feature `{}` needs allowed values", f.id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    /// All features except the label slot, in schema order.
    pub fn predictive(&self) -> &[FeatureDef] {
        &self.features[..self.features.len() - 1]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureDef> {
        self.index_of(id).map(|i| &self.features[i])
    }

    pub fn label_index(&self) -> usize {
        self.features.len() - 1
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_category_counts() {
        let s = FeatureSchema::default_schema();
        assert_eq!(s.len(), 85);
        assert_eq!(s.predictive().len(), 84);
        let counts: Vec<usize> = Category::ALL
            .iter()
            .map(|c| s.features().iter().filter(|f| f.category == *c).count())
            .collect();
        assert_eq!(counts, vec![7, 35, 18, 7, 16, 2]);
        for id in REQUIRED_IDS {
            assert!(s.contains(id), "{id}");
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = crate::resources::SCHEMA.replace("hemoglobin,Lab", "crp,Lab");
        let err = FeatureSchema::parse(&text).unwrap_err();
        assert!(matches!(err, Error::SchemaInvariantViolation(ref m) if m.contains("crp")), "{err}");
    }

    #[test]
    fn short_schema_rejected() {
        let text: String = crate::resources::SCHEMA
            .lines()
            .filter(|l| !l.starts_with("gout,"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = FeatureSchema::parse(&text).unwrap_err();
        assert!(matches!(err, Error::SchemaInvariantViolation(ref m) if m.contains("84")), "{err}");
    }

    #[test]
    fn lab_without_unit_rejected() {
        let text = crate::resources::SCHEMA.replace("crp,Lab,Numeric,mg/L", "crp,Lab,Numeric,");
        assert!(matches!(
            FeatureSchema::parse(&text),
            Err(Error::SchemaInvariantViolation(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let base = crate::resources::SCHEMA.trim_end();
        let text = format!("{base}\nbogus\n");
        match FeatureSchema::parse(&text) {
            Err(Error::Parse { line, .. }) => {
                assert_eq!(line, base.lines().count() + 1)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_missing_file() {
        let err = FeatureSchema::load(Path::new("/nonexistent/schema.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}

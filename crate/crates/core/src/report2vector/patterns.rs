use std::path::Path;
use std::str::FromStr;

use regex::Regex;

use super::sections::Section;
use crate::schema::{FeatureSchema, ValueKind};
use crate::{Error, Result};

/// Exact decimal conversion factor, kept as a fraction so that e.g. a
/// scale of `0.1` divides by ten instead of multiplying by an inexact
/// binary 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    num: i64,
    den: i64,
}

impl Scale {
    pub const ONE: Scale = Scale { num: 1, den: 1 };

    /// `(numerator, denominator)` in lowest terms.
    pub fn parts(self) -> (i64, i64) {
        (self.num, self.den)
    }

    pub fn apply(self, x: f64) -> f64 {
        if self.den == 1 {
            x * self.num as f64
        } else {
            x * self.num as f64 / self.den as f64
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("bad scale `{s}`");
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 9 {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let mut num: i64 = digits.parse().map_err(|_| bad())?;
        let mut den: i64 = 10i64.pow(frac.len() as u32);
        if num == 0 {
            return Err(bad());
        }
        let g = gcd(num, den);
        num /= g;
        den /= g;
        Ok(Scale { num, den })
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Parses a captured number, accepting a decimal comma.
pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().replace(',', ".").parse().ok().filter(|x: &f64| x.is_finite())
}

#[derive(Debug, Clone)]
pub struct PatternSpec {
    pub feature_id: String,
    pub regex: Regex,
    pub unit: String,
    pub scale: Scale,
    pub example: Option<String>,
}

impl PatternSpec {
    fn capture(&self, haystack: &str) -> Vec<(usize, Option<f64>)> {
        self.regex
            .captures_iter(haystack)
            .filter_map(|c| c.get(1))
            .map(|m| (m.start(), parse_number(m.as_str()).map(|x| self.scale.apply(x))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    pub specs: Vec<PatternSpec>,
}

impl PatternSet {
    pub fn default_for(schema: &FeatureSchema) -> Self {
        Self::parse(crate::resources::PATTERNS, schema).expect("shipped patterns are valid")
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, schema)
    }

    /// Parses `feature_id<TAB>regex<TAB>unit<TAB>scale[<TAB>example]` lines.
    /// Each regex must have exactly one capture group, and the example
    /// phrase, when given, must yield a number.
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut specs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse("patterns", line_no, m);
            let cols: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&cols.len()) {
                return Err(err(format!("expected 4 or 5 tab-separated fields, found {}", cols.len())));
            }
            let feature_id = cols[0].trim();
            match schema.get(feature_id) {
                Some(def) if def.value_kind == ValueKind::Numeric => {}
                Some(_) => return Err(err(format!("`{feature_id}` is not numeric"))),
                None => return Err(err(format!("feature `{feature_id}` not in schema"))),
            }
            let regex = Regex::new(cols[1]).map_err(|e| err(e.to_string()))?;
            if regex.captures_len() != 2 {
                return Err(err("regex must have exactly one capture group".into()));
            }
            let scale: Scale = cols[3].parse().map_err(err)?;
            let spec = PatternSpec {
                feature_id: feature_id.to_string(),
                regex,
                unit: cols[2].trim().to_string(),
                scale,
                example: cols.get(4).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()),
            };
            if let Some(ex) = &spec.example {
                if !matches!(spec.capture(ex).first(), Some((_, Some(_)))) {
                    return Err(err(format!("example `{ex}` does not yield a number")));
                }
            }
            specs.push(spec);
        }
        Ok(PatternSet { specs })
    }
}

/// Runs every pattern over one section. Each feature keeps its last match in
/// document order; results are ordered by position. Captures that fail to
/// parse are skipped.
pub fn extract_patterns(text: &str, section: &Section, specs: &PatternSet) -> Vec<(String, f64)> {
    let haystack = &text[section.start..section.end];
    let mut hits: Vec<(usize, &str, f64)> = Vec::new();
    for spec in &specs.specs {
        for (pos, value) in spec.capture(haystack) {
            match value {
                Some(v) => hits.push((pos, &spec.feature_id, v)),
                None => log::debug!("unparseable capture for {} at {}", spec.feature_id, section.start + pos),
            }
        }
    }
    hits.sort_by_key(|h| h.0);
    let mut last: Vec<(usize, &str, f64)> = Vec::new();
    for hit in hits {
        last.retain(|h| h.1 != hit.1);
        last.push(hit);
    }
    last.into_iter().map(|(_, f, v)| (f.to_string(), v)).collect()
}

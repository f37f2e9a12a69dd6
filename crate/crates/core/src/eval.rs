//! Confusion matrices, accuracy, MCC, silver/gold label agreement and the
//! missingness report comparing original and enriched datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_json, write_rows};
use crate::labeler::Label;
use crate::schema::{Category, FeatureSchema, ValueKind};
use crate::vector::{PatientVector, Value};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts prediction/gold pairs. Excluded gold labels must be filtered out
/// beforehand.
pub fn confusion(preds: &[bool], golds: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch(preds.len(), golds.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, g) in preds.iter().zip(golds) {
        let g = g.as_bool().ok_or(Error::ExcludedLabelPresent)?;
        match (p, g) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Matthews correlation coefficient; 0.0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::EmptyMatrix),
        n => Ok((cm.tp + cm.tn) as f64 / n as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: u64,
    pub accuracy: f64,
    pub mcc: f64,
    pub confusion: ConfusionMatrix,
}

pub fn metrics(preds: &[bool], golds: &[Label]) -> Result<Metrics> {
    let cm = confusion(preds, golds)?;
    Ok(Metrics {
        n: cm.total(),
        accuracy: accuracy(&cm)?,
        mcc: mcc(&cm),
        confusion: cm,
    })
}

/// Fraction of patients, present and non-excluded in both maps, whose
/// labels agree.
pub fn label_agreement(silver: &BTreeMap<String, Label>, gold: &BTreeMap<String, Label>) -> Result<f64> {
    let mut shared = 0usize;
    let mut agree = 0usize;
    for (id, s) in silver {
        let Some(g) = gold.get(id) else { continue };
        if *s == Label::Excluded || *g == Label::Excluded {
            continue;
        }
        shared += 1;
        agree += usize::from(s == g);
    }
    if shared == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(agree as f64 / shared as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEnrichment {
    pub feature_id: String,
    pub category: Category,
    pub missing_pct_original: f64,
    pub missing_pct_enriched: f64,
    pub positive_pct_original: Option<f64>,
    pub positive_pct_enriched: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEnrichment {
    pub category: Category,
    pub features: usize,
    pub mean_missing_pct_original: f64,
    pub mean_missing_pct_enriched: f64,
    pub mean_positive_pct_original: Option<f64>,
    pub mean_positive_pct_enriched: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub patients: usize,
    pub features: Vec<FeatureEnrichment>,
    pub categories: Vec<CategoryEnrichment>,
}

/// One row of `enrichment.csv`. Category aggregates use `*` as the feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub feature: String,
    pub category: String,
    pub metric: String,
    pub original: f64,
    pub enriched: f64,
    pub delta: f64,
}

fn pct(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-feature missingness and positive rates over the predictive features
/// of two datasets covering the same patients.
pub fn enrichment_report(
    original: &[PatientVector],
    enriched: &[PatientVector],
    schema: &FeatureSchema,
) -> Result<EnrichmentReport> {
    let ids = |vs: &[PatientVector]| vs.iter().map(|v| v.patient_id.clone()).collect::<BTreeSet<_>>();
    let (a, b) = (ids(original), ids(enriched));
    if a != b || a.len() != original.len() || b.len() != enriched.len() {
        let only: Vec<&String> = a.symmetric_difference(&b).take(5).collect();
        return Err(Error::PatientSetMismatch(if only.is_empty() {
            "duplicate patient ids".to_string()
        } else {
            format!("ids in only one dataset: {only:?}")
        }));
    }
    for v in original.iter().chain(enriched) {
        v.check_conforms(schema)?;
    }
    let n = original.len();
    let features: Vec<FeatureEnrichment> = schema
        .predictive()
        .iter()
        .enumerate()
        .map(|(i, def)| {
            let missing = |vs: &[PatientVector]| pct(vs.iter().filter(|v| v.values[i].is_unknown()).count(), n);
            let positive = |vs: &[PatientVector]| {
                (def.value_kind == ValueKind::Boolean3State && n > 0)
                    .then(|| pct(vs.iter().filter(|v| v.values[i].value == Value::Present).count(), n))
            };
            let guard = |x: f64| if n == 0 { 0.0 } else { x };
            FeatureEnrichment {
                feature_id: def.id.clone(),
                category: def.category,
                missing_pct_original: guard(missing(original)),
                missing_pct_enriched: guard(missing(enriched)),
                positive_pct_original: positive(original),
                positive_pct_enriched: positive(enriched),
            }
        })
        .collect();
    let categories = Category::ALL
        .iter()
        .filter_map(|&c| {
            let fs: Vec<&FeatureEnrichment> = features.iter().filter(|f| f.category == c).collect();
            Some(CategoryEnrichment {
                category: c,
                features: fs.len(),
                mean_missing_pct_original: mean(fs.iter().map(|f| f.missing_pct_original))?,
                mean_missing_pct_enriched: mean(fs.iter().map(|f| f.missing_pct_enriched))?,
                mean_positive_pct_original: mean(fs.iter().filter_map(|f| f.positive_pct_original)),
                mean_positive_pct_enriched: mean(fs.iter().filter_map(|f| f.positive_pct_enriched)),
            })
        })
        .collect();
    Ok(EnrichmentReport {
        patients: n,
        features,
        categories,
    })
}

impl EnrichmentReport {
    pub fn feature(&self, id: &str) -> Option<&FeatureEnrichment> {
        self.features.iter().find(|f| f.feature_id == id)
    }

    pub fn category(&self, c: Category) -> Option<&CategoryEnrichment> {
        self.categories.iter().find(|x| x.category == c)
    }

    /// Long-format rows: one per (feature or category, metric).
    pub fn long_rows(&self) -> Vec<EnrichmentRow> {
        let row = |feature: &str, category: Category, metric: &str, original: f64, enriched: f64| EnrichmentRow {
            feature: feature.to_string(),
            category: category.as_str().to_string(),
            metric: metric.to_string(),
            original,
            enriched,
            delta: enriched - original,
        };
        let mut rows = Vec::new();
        for f in &self.features {
            rows.push(row(&f.feature_id, f.category, "missing_pct", f.missing_pct_original, f.missing_pct_enriched));
            if let (Some(o), Some(e)) = (f.positive_pct_original, f.positive_pct_enriched) {
                rows.push(row(&f.feature_id, f.category, "positive_pct", o, e));
            }
        }
        for c in &self.categories {
            rows.push(row("*", c.category, "missing_pct", c.mean_missing_pct_original, c.mean_missing_pct_enriched));
            if let (Some(o), Some(e)) = (c.mean_positive_pct_original, c.mean_positive_pct_enriched) {
                rows.push(row("*", c.category, "positive_pct", o, e));
            }
        }
        rows
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, self.long_rows())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::Provenance;
    use proptest::prelude::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter()
            .map(|&b| if b == 1 { Label::Progression } else { Label::NoProgression })
            .collect()
    }

    fn cm(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    #[test]
    fn confusion_examples() {
        let got = confusion(&[true, true, false], &labels(&[1, 0, 0])).unwrap();
        assert_eq!(got, cm(1, 1, 1, 0));
        let same = confusion(&[true, false, true], &labels(&[1, 0, 1])).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        assert!(matches!(
            confusion(&[true], &[Label::Excluded]),
            Err(Error::ExcludedLabelPresent)
        ));
        assert!(matches!(confusion(&[true], &[]), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn mcc_examples() {
        assert!((mcc(&cm(5, 3, 1, 1)) - 14.0 / 24.0).abs() < 1e-12);
        assert_eq!(mcc(&cm(10, 10, 0, 0)), 1.0);
        assert_eq!(mcc(&cm(7, 0, 3, 0)), 0.0);
        assert_eq!(mcc(&cm(0, 0, 0, 0)), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        assert!((accuracy(&cm(5, 3, 1, 1)).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(accuracy(&cm(4, 4, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&cm(0, 0, 3, 2)).unwrap(), 0.0);
        assert!(matches!(accuracy(&cm(0, 0, 0, 0)), Err(Error::EmptyMatrix)));
    }

    fn map(pairs: &[(&str, Label)]) -> BTreeMap<String, Label> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn agreement_examples() {
        let gold: Vec<(String, Label)> = (0..10).map(|i| (format!("P{i}"), Label::Progression)).collect();
        let gold: BTreeMap<_, _> = gold.into_iter().collect();
        assert_eq!(label_agreement(&gold, &gold).unwrap(), 1.0);
        let mut silver = gold.clone();
        silver.insert("P0".into(), Label::NoProgression);
        silver.insert("P1".into(), Label::NoProgression);
        assert!((label_agreement(&silver, &gold).unwrap() - 0.8).abs() < 1e-15);
        silver.insert("P2".into(), Label::Excluded);
        assert!((label_agreement(&silver, &gold).unwrap() - 7.0 / 9.0).abs() < 1e-15);
        let other = map(&[("Q1", Label::Progression)]);
        assert!(matches!(label_agreement(&other, &gold), Err(Error::EmptyIntersection)));
    }

    /// Pearson correlation of two 0/1 vectors computed from raw moments.
    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        if vx == 0.0 || vy == 0.0 {
            0.0
        } else {
            cov / (vx * vy).sqrt()
        }
    }

    proptest! {
        #[test]
        fn mcc_matches_pearson(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let preds: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let golds: Vec<Label> = pairs.iter().map(|p| if p.1 { Label::Progression } else { Label::NoProgression }).collect();
            let m = mcc(&confusion(&preds, &golds).unwrap());
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.0))).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
            prop_assert!((m - pearson(&x, &y)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&m));
        }

        #[test]
        fn mcc_swap_symmetric(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let a = mcc(&cm(tp, tn, fp, fn_));
            let b = mcc(&cm(tn, tp, fn_, fp));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn perfect_iff_no_errors(tp in 0u64..20, tn in 0u64..20, fp in 0u64..3, fn_ in 0u64..3) {
            prop_assume!(tp + tn + fp + fn_ > 0);
            let c = cm(tp, tn, fp, fn_);
            prop_assert_eq!(accuracy(&c).unwrap() == 1.0, fp == 0 && fn_ == 0);
            prop_assert_eq!(mcc(&c) == 1.0, fp == 0 && fn_ == 0 && tp > 0 && tn > 0);
        }
    }

    fn albumin_fixture(missing: usize) -> Vec<PatientVector> {
        let schema = FeatureSchema::default_schema();
        (0..10)
            .map(|i| {
                let mut v = PatientVector::empty(format!("P{i}"), &schema);
                if i >= missing {
                    v.set(&schema, "albumin", Value::Number(4.0), Provenance::Structured);
                }
                v
            })
            .collect()
    }

    #[test]
    fn enrichment_deltas() {
        let schema = FeatureSchema::default_schema();
        let orig = albumin_fixture(8);
        let enr = albumin_fixture(4);
        let rep = enrichment_report(&orig, &enr, &schema).unwrap();
        let alb = rep.feature("albumin").unwrap();
        assert_eq!((alb.missing_pct_original, alb.missing_pct_enriched), (80.0, 40.0));
        let row = rep.long_rows().into_iter().find(|r| r.feature == "albumin").unwrap();
        assert_eq!(row.delta, -40.0);
        assert_eq!(rep.feature("la_diameter").unwrap().missing_pct_original, 100.0);
        assert_eq!(rep.features.len(), 84);

        let same = enrichment_report(&orig, &orig, &schema).unwrap();
        assert!(same.long_rows().iter().all(|r| r.delta == 0.0));
    }

    #[test]
    fn enrichment_needs_same_patients() {
        let schema = FeatureSchema::default_schema();
        let mut other = albumin_fixture(0);
        other[3].patient_id = "X".into();
        assert!(matches!(
            enrichment_report(&albumin_fixture(0), &other, &schema),
            Err(Error::PatientSetMismatch(_))
        ));
    }
}

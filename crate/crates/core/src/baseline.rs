//! L2-regularized logistic regression fitted by full-batch gradient
//! descent, with mean imputation and standardization learned on the
//! training split. Also exports seeded train/test splits for external
//! models.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::write_dataset;
use crate::labeler::Label;
use crate::schema::{FeatureSchema, ValueKind};
use crate::vector::{PatientVector, Value};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            l2: 1e-2,
            epochs: 500,
            learning_rate: 0.1,
            seed: 42,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l2 >= 0.0 && self.l2.is_finite() && self.learning_rate > 0.0 && self.learning_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "need l2 >= 0 and learning_rate > 0, got l2={} learning_rate={}",
                self.l2, self.learning_rate
            )))
        }
    }
}

/// One encoded input column: a tri-state or numeric feature, or one level
/// of a categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub feature_id: String,
    pub level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format_version: u32,
    pub schema_version: String,
    pub columns: Vec<EncodedColumn>,
    /// Training mean of each raw column; imputes Unknown and centers.
    pub means: Vec<f64>,
    /// Training standard deviation of each column (1 when constant).
    pub scales: Vec<f64>,
    /// One weight per column, then the bias.
    pub weights: Vec<f64>,
    pub params: FitParams,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub positive: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn columns(schema: &FeatureSchema) -> Vec<EncodedColumn> {
    let mut cols = Vec::new();
    for def in schema.predictive() {
        match def.value_kind {
            ValueKind::Boolean3State | ValueKind::Numeric => cols.push(EncodedColumn {
                feature_id: def.id.clone(),
                level: None,
            }),
            ValueKind::Categorical => {
                for level in def.allowed_values.iter().flatten() {
                    cols.push(EncodedColumn {
                        feature_id: def.id.clone(),
                        level: Some(level.clone()),
                    });
                }
            }
            ValueKind::Date => {}
        }
    }
    cols
}

/// Raw encoded row; `None` where the feature is Unknown.
fn encode_raw(v: &PatientVector, schema: &FeatureSchema, cols: &[EncodedColumn]) -> Vec<Option<f64>> {
    cols.iter()
        .map(|c| match (v.value(schema, &c.feature_id), &c.level) {
            (Value::Unknown, _) => None,
            (Value::Present, None) => Some(1.0),
            (Value::Absent, None) => Some(0.0),
            (Value::Number(x), None) => Some(*x),
            (Value::Category(cat), Some(level)) => Some(if cat == level { 1.0 } else { 0.0 }),
            _ => None,
        })
        .collect()
}

fn binary_label(v: &PatientVector, schema: &FeatureSchema) -> Result<f64> {
    match v.label(schema).and_then(Label::as_bool) {
        Some(b) => Ok(if b { 1.0 } else { 0.0 }),
        None => Err(Error::ExcludedLabelPresent),
    }
}

/// Mean logistic loss plus `l2 / 2 * |w|^2` (bias not penalized), and its
/// gradient. `params` holds the column weights followed by the bias.
pub fn loss_and_gradient(params: &[f64], x: &[Vec<f64>], y: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let n = x.len() as f64;
    let (w, b) = (&params[..d], params[d]);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &yi) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
        grad[d] += r;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    let sq: f64 = w.iter().map(|c| c * c).sum();
    loss += 0.5 * l2 * sq;
    for (g, c) in grad.iter_mut().zip(w) {
        *g += l2 * c;
    }
    (loss, grad)
}

impl BaselineModel {
    fn standardize(&self, raw: &[Option<f64>]) -> Vec<f64> {
        raw.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| x.map_or(0.0, |x| (x - m) / s))
            .collect()
    }

    pub fn predict(&self, v: &PatientVector, schema: &FeatureSchema) -> Result<Prediction> {
        if schema.version != self.schema_version || columns(schema) != self.columns {
            return Err(Error::SchemaMismatch(format!(
                "model trained on schema `{}`, got `{}`",
                self.schema_version, schema.version
            )));
        }
        v.check_conforms(schema)?;
        let x = self.standardize(&encode_raw(v, schema, &self.columns));
        let d = self.columns.len();
        let z = self.weights[d] + x.iter().zip(&self.weights[..d]).map(|(a, w)| a * w).sum::<f64>();
        let probability = sigmoid(z);
        Ok(Prediction {
            probability,
            positive: probability >= 0.5,
        })
    }

    /// Fits on labeled vectors. Every label must be 1 or 0 and both classes
    /// must occur.
    pub fn fit(train: &[PatientVector], schema: &FeatureSchema, params: FitParams) -> Result<Self> {
        Self::fit_with_history(train, schema, params).map(|(m, _)| m)
    }

    /// Like [`BaselineModel::fit`], also returning the training loss before
    /// each epoch and after the last one.
    pub fn fit_with_history(
        train: &[PatientVector],
        schema: &FeatureSchema,
        params: FitParams,
    ) -> Result<(Self, Vec<f64>)> {
        params.validate()?;
        let y: Vec<f64> = train.iter().map(|v| binary_label(v, schema)).collect::<Result<_>>()?;
        let positives = y.iter().filter(|&&t| t == 1.0).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::SingleClassTrainingSet);
        }
        for v in train {
            v.check_conforms(schema)?;
        }
        let cols = columns(schema);
        let raw: Vec<Vec<Option<f64>>> = train.iter().map(|v| encode_raw(v, schema, &cols)).collect();
        let mut means = Vec::with_capacity(cols.len());
        let mut scales = Vec::with_capacity(cols.len());
        for j in 0..cols.len() {
            let known: Vec<f64> = raw.iter().filter_map(|r| r[j]).collect();
            let mean = if known.is_empty() {
                0.0
            } else {
                known.iter().sum::<f64>() / known.len() as f64
            };
            // imputed rows sit at the mean, so they add nothing to the spread
            let var = known.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / raw.len() as f64;
            means.push(mean);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        let mut model = BaselineModel {
            format_version: MODEL_FORMAT_VERSION,
            schema_version: schema.version.clone(),
            columns: cols,
            means,
            scales,
            weights: Vec::new(),
            params,
            final_loss: f64::NAN,
        };
        let x: Vec<Vec<f64>> = raw.iter().map(|r| model.standardize(r)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut w: Vec<f64> = (0..=model.columns.len()).map(|_| rng.random_range(-0.01..0.01)).collect();
        let mut history = Vec::with_capacity(params.epochs + 1);
        for _ in 0..params.epochs {
            let (loss, grad) = loss_and_gradient(&w, &x, &y, params.l2);
            history.push(loss);
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= params.learning_rate * g;
            }
        }
        let (loss, _) = loss_and_gradient(&w, &x, &y, params.l2);
        history.push(loss);
        model.weights = w;
        model.final_loss = loss;
        Ok((model, history))
    }
}

/// Seeded split: vectors are ordered by patient id, shuffled, and the first
/// `round(n * train_fraction)` go to training.
pub fn split(
    vectors: &[PatientVector],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PatientVector>, Vec<PatientVector>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidConfig(format!("train fraction {train_fraction} not in [0, 1]")));
    }
    let mut all: Vec<PatientVector> = vectors.to_vec();
    all.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (all.len() as f64 * train_fraction).round() as usize;
    let test = all.split_off(n_train);
    Ok((all, test))
}

/// Writes `train.csv` and `test.csv` (with provenance sidecars) into `dir`.
/// Every vector must carry a 1 or 0 label.
pub fn export_dataset(
    vectors: &[PatientVector],
    schema: &FeatureSchema,
    dir: &Path,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PatientVector>, Vec<PatientVector>)> {
    for v in vectors {
        binary_label(v, schema)?;
    }
    let (train, test) = split(vectors, train_fraction, seed)?;
    write_dataset(&train, schema, &dir.join("train.csv"))?;
    write_dataset(&test, schema, &dir.join("test.csv"))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_dataset;
    use crate::vector::Provenance;

    fn schema() -> FeatureSchema {
        FeatureSchema::default_schema()
    }

    /// Labels follow hypertension; age is noise.
    fn toy(schema: &FeatureSchema, n: usize) -> Vec<PatientVector> {
        (0..n)
            .map(|i| {
                let mut v = PatientVector::empty(format!("P{i:04}"), schema);
                let pos = i % 3 != 0;
                v.set(schema, "age", Value::Number(50.0 + (i * 7 % 40) as f64), Provenance::Structured);
                if i % 5 != 0 {
                    let htn = if (i % 7 == 0) != pos { Value::Present } else { Value::Absent };
                    v.set(schema, "hypertension", htn, Provenance::Report);
                }
                v.set(schema, "af_type", Value::Category(["paroxysmal", "persistent"][i % 2].into()), Provenance::Both);
                v.set_label(schema, Some(if pos { Label::Progression } else { Label::NoProgression }));
                v
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let s = schema();
        let mut m = BaselineModel::fit(&toy(&s, 60), &s, FitParams::default()).unwrap();
        m.weights.iter_mut().for_each(|w| *w = 0.0);
        for v in toy(&s, 10) {
            assert_eq!(m.predict(&v, &s).unwrap().probability, 0.5);
        }
    }

    #[test]
    fn learns_and_is_monotone() {
        let s = schema();
        let data = toy(&s, 300);
        let m = BaselineModel::fit(&data, &s, FitParams::default()).unwrap();
        let j = m.columns.iter().position(|c| c.feature_id == "hypertension").unwrap();
        assert!(m.weights[j] > 0.0);
        let mut v = data[1].clone();
        v.set(&s, "hypertension", Value::Absent, Provenance::Report);
        let lo = m.predict(&v, &s).unwrap().probability;
        v.set(&s, "hypertension", Value::Present, Provenance::Report);
        let hi = m.predict(&v, &s).unwrap().probability;
        assert!(hi > lo);
        let correct = data
            .iter()
            .filter(|v| m.predict(v, &s).unwrap().positive == (v.label(&s) == Some(Label::Progression)))
            .count();
        assert!(correct as f64 / data.len() as f64 > 0.8);
    }

    #[test]
    fn unknown_vector_predicts_at_the_mean_point() {
        let s = schema();
        let m = BaselineModel::fit(&toy(&s, 100), &s, FitParams::default()).unwrap();
        let blank = PatientVector::empty("X", &s);
        let d = m.columns.len();
        assert_eq!(m.predict(&blank, &s).unwrap().probability, sigmoid(m.weights[d]));
        // the same point written out explicitly
        let mut at_mean = blank.clone();
        let j = m.columns.iter().position(|c| c.feature_id == "age").unwrap();
        at_mean.set(&s, "age", Value::Number(m.means[j]), Provenance::Structured);
        let p = m.predict(&at_mean, &s).unwrap().probability;
        assert!((p - sigmoid(m.weights[d])).abs() < 1e-12);
    }

    #[test]
    fn loss_never_increases_and_fit_is_deterministic() {
        let s = schema();
        let data = toy(&s, 200);
        let (m1, hist) = BaselineModel::fit_with_history(&data, &s, FitParams::default()).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-15), "loss went up");
        let m2 = BaselineModel::fit(&data, &s, FitParams::default()).unwrap();
        assert_eq!(m1.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(), m2.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
        assert_eq!(m1.weights.len(), m1.columns.len() + 1);
        let json = serde_json::to_string(&m1).unwrap();
        assert_eq!(serde_json::from_str::<BaselineModel>(&json).unwrap(), m1);
    }

    #[test]
    fn label_errors() {
        let s = schema();
        let mut data = toy(&s, 20);
        for v in &mut data {
            v.set_label(&s, Some(Label::Progression));
        }
        assert!(matches!(BaselineModel::fit(&data, &s, FitParams::default()), Err(Error::SingleClassTrainingSet)));
        data[0].set_label(&s, Some(Label::Excluded));
        assert!(matches!(BaselineModel::fit(&data, &s, FitParams::default()), Err(Error::ExcludedLabelPresent)));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(export_dataset(&data, &s, dir.path(), 0.73, 1), Err(Error::ExcludedLabelPresent)));
    }

    #[test]
    fn predict_rejects_other_schema() {
        let s = schema();
        let m = BaselineModel::fit(&toy(&s, 50), &s, FitParams::default()).unwrap();
        let mut other = s.clone();
        other.version = "other/1".into();
        let v = PatientVector::empty("X", &other);
        assert!(matches!(m.predict(&v, &other), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn export_split_sizes_and_round_trip() {
        let s = schema();
        let data = toy(&s, 1023);
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = export_dataset(&data, &s, dir.path(), 0.73, 42).unwrap();
        assert_eq!((train.len(), test.len()), (747, 276));
        let ids = |vs: &[PatientVector]| vs.iter().map(|v| v.patient_id.clone()).collect::<std::collections::BTreeSet<_>>();
        assert!(ids(&train).is_disjoint(&ids(&test)));
        assert_eq!(read_dataset(&s, &dir.path().join("train.csv")).unwrap(), train);
        assert_eq!(read_dataset(&s, &dir.path().join("test.csv")).unwrap(), test);
        let (again, _) = split(&data, 0.73, 42).unwrap();
        assert_eq!(again, train);
    }
}

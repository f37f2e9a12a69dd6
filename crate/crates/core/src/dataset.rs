//! Tabular dataset files plus the small CSV/JSON helpers every stage uses.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::merger::Conflict;
use crate::schema::FeatureSchema;
use crate::vector::{FeatureValue, PatientVector, Provenance, Value};
use crate::{Error, Result};

pub const LABEL_COLUMN: &str = "label";

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(path.into()),
        _ => csv_err(path)(e),
    })?;
    let what = path.display().to_string();
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(&what, i + 2, e)))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = create(path)?;
    for r in rows {
        let line = serde_json::to_string(&r).map_err(|e| Error::io(path, e.into()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let what = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::parse(&what, i + 1, e))?);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e))
}

pub fn provenance_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.jsonl");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct ProvenanceLine {
    patient_id: String,
    /// Non-`None` provenance by feature id.
    provenance: BTreeMap<String, Provenance>,
}

/// Writes one row per vector: `patient_id`, the predictive features in
/// schema order, then `label`. Provenance goes to `<path>.provenance.jsonl`.
pub fn write_dataset(vectors: &[PatientVector], schema: &FeatureSchema, path: &Path) -> Result<()> {
    for v in vectors {
        v.check_conforms(schema)?;
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let header = std::iter::once("patient_id")
        .chain(schema.predictive().iter().map(|f| f.id.as_str()))
        .chain(std::iter::once(LABEL_COLUMN));
    w.write_record(header).map_err(csv_err(path))?;
    let mut sidecar = Vec::with_capacity(vectors.len());
    for v in vectors {
        let row = std::iter::once(v.patient_id.clone()).chain(v.values.iter().map(|fv| fv.value.to_cell()));
        w.write_record(row).map_err(csv_err(path))?;
        sidecar.push(ProvenanceLine {
            patient_id: v.patient_id.clone(),
            provenance: schema
                .features()
                .iter()
                .zip(&v.values)
                .filter(|(_, fv)| fv.provenance != Provenance::None)
                .map(|(f, fv)| (f.id.clone(), fv.provenance))
                .collect(),
        });
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_jsonl(&provenance_path(path), sidecar)
}

/// Reads a dataset written by [`write_dataset`], including its provenance
/// sidecar.
pub fn read_dataset(schema: &FeatureSchema, path: &Path) -> Result<Vec<PatientVector>> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(path.into()),
        _ => csv_err(path)(e),
    })?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let expected: Vec<&str> = std::iter::once("patient_id")
        .chain(schema.predictive().iter().map(|f| f.id.as_str()))
        .chain(std::iter::once(LABEL_COLUMN))
        .collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::SchemaMismatch(format!("{what}: header does not match schema columns")));
    }
    let sidecar: Vec<ProvenanceLine> = read_jsonl(&provenance_path(path))?;
    let mut provenance: BTreeMap<String, BTreeMap<String, Provenance>> =
        sidecar.into_iter().map(|l| (l.patient_id, l.provenance)).collect();

    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&what, line, e))?;
        let patient_id = rec[0].to_string();
        let prov = provenance.remove(&patient_id).unwrap_or_default();
        let mut values = Vec::with_capacity(schema.len());
        for (def, cell) in schema.features().iter().zip(rec.iter().skip(1)) {
            let value = Value::from_cell(def.value_kind, cell).map_err(|m| Error::parse(&what, line, format!("{}: {m}", def.id)))?;
            if !value.fits(def) {
                return Err(Error::parse(&what, line, format!("{}: value `{cell}` not allowed", def.id)));
            }
            let p = prov.get(&def.id).copied().unwrap_or(Provenance::None);
            if value.is_unknown() != (p == Provenance::None) {
                return Err(Error::parse(&what, line, format!("{}: provenance `{p:?}` inconsistent with value", def.id)));
            }
            values.push(FeatureValue::new(value, p));
        }
        out.push(PatientVector { patient_id, values });
    }
    Ok(out)
}

pub fn write_conflicts(path: &Path, conflicts: &[Conflict]) -> Result<()> {
    write_jsonl(path, conflicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::Label;

    fn sample(schema: &FeatureSchema) -> Vec<PatientVector> {
        let mut a = PatientVector::empty("P1", schema);
        a.set(schema, "age", Value::Number(71.5), Provenance::Structured);
        a.set(schema, "sex", Value::Category("F".into()), Provenance::Structured);
        a.set(schema, "hypertension", Value::Present, Provenance::Both);
        a.set(schema, "copd", Value::Absent, Provenance::Report);
        a.set(schema, "albumin", Value::Number(3.7), Provenance::Report);
        a.set(schema, "af_type", Value::Category("persistent".into()), Provenance::Report);
        a.set_label(schema, Some(Label::Excluded));
        let b = PatientVector::empty("P2", schema);
        vec![a, b]
    }

    #[test]
    fn round_trip() {
        let schema = FeatureSchema::default_schema();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let vs = sample(&schema);
        write_dataset(&vs, &schema, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 86);
        assert_eq!(header[1], "age");
        assert_eq!(header[85], "label");
        assert_eq!(read_dataset(&schema, &path).unwrap(), vs);
    }

    #[test]
    fn short_vector_rejected() {
        let schema = FeatureSchema::default_schema();
        let mut vs = sample(&schema);
        vs[1].values.pop();
        let dir = tempfile::tempdir().unwrap();
        let err = write_dataset(&vs, &schema, &dir.path().join("d.csv")).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn missing_dataset_is_missing_file() {
        let schema = FeatureSchema::default_schema();
        let err = read_dataset(&schema, Path::new("/nonexistent/d.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}

//! Loading and writing the raw inputs: `reports.jsonl` and the five coded
//! EHR tables.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::report2vector::Section;
use crate::{Date, Error, Result};

/// One dated discharge report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub patient_id: String,
    pub report_id: String,
    pub date: Date,
    pub text: String,
    #[serde(skip)]
    pub sections: Vec<Section>,
}

impl ReportDocument {
    pub fn new(
        patient_id: impl Into<String>,
        report_id: impl Into<String>,
        date: Date,
        text: impl Into<String>,
    ) -> Self {
        ReportDocument {
            patient_id: patient_id.into(),
            report_id: report_id.into(),
            date,
            text: text.into(),
            sections: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
struct RawReport {
    patient_id: String,
    report_id: String,
    date: String,
    text: String,
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportDocument>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reports(&text)
}

/// Parses JSONL report text; output is sorted by (patient, date, report id).
pub fn parse_reports(text: &str) -> Result<Vec<ReportDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReport =
            serde_json::from_str(line).map_err(|e| Error::parse("reports", line_no, e))?;
        let date = crate::parse_date(&raw.date).ok_or(Error::BadDate(line_no))?;
        if raw.text.trim().is_empty() {
            return Err(Error::parse("reports", line_no, "empty report text"));
        }
        if !seen.insert(raw.report_id.clone()) {
            return Err(Error::DuplicateReportId(raw.report_id));
        }
        docs.push(ReportDocument::new(raw.patient_id, raw.report_id, date, raw.text));
    }
    sort_reports(&mut docs);
    Ok(docs)
}

pub fn sort_reports(docs: &mut [ReportDocument]) {
    docs.sort_by(|a, b| {
        (&a.patient_id, a.date, &a.report_id).cmp(&(&b.patient_id, b.date, &b.report_id))
    });
}

pub fn write_reports(path: &Path, docs: &[ReportDocument]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in docs {
        let line = serde_json::to_string(d).expect("report serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Groups sorted reports by patient id.
pub fn reports_by_patient(docs: &[ReportDocument]) -> BTreeMap<&str, Vec<&ReportDocument>> {
    let mut map: BTreeMap<&str, Vec<&ReportDocument>> = BTreeMap::new();
    for d in docs {
        map.entry(d.patient_id.as_str()).or_default().push(d);
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographic {
    pub patient_id: String,
    pub birth_date: Date,
    pub sex: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub patient_id: String,
    pub date: Date,
    pub code_system: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRow {
    pub patient_id: String,
    pub date: Date,
    pub test_code: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcedureRow {
    pub patient_id: String,
    pub date: Date,
    pub code: String,
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrescriptionRow {
    pub patient_id: String,
    pub date: Date,
    pub atc_code: String,
}

/// All coded rows for one patient, each table sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub demographics: Demographic,
    pub diagnoses: Vec<DiagnosisRow>,
    pub labs: Vec<LabRow>,
    pub procedures: Vec<ProcedureRow>,
    pub prescriptions: Vec<PrescriptionRow>,
}

impl PatientRecord {
    pub fn new(demographics: Demographic) -> Self {
        PatientRecord {
            demographics,
            diagnoses: Vec::new(),
            labs: Vec::new(),
            procedures: Vec::new(),
            prescriptions: Vec::new(),
        }
    }

    fn normalize(&mut self) {
        self.diagnoses.sort();
        self.procedures.sort();
        self.prescriptions.sort();
        self.labs.sort_by(|a, b| {
            (a.date, &a.test_code, &a.unit)
                .cmp(&(b.date, &b.test_code, &b.unit))
                .then(a.value.total_cmp(&b.value))
        });
    }
}

/// The loaded coded EHR tables, keyed by patient id. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructuredStore {
    patients: BTreeMap<String, PatientRecord>,
}

pub const TABLES: [&str; 5] = [
    "demographics",
    "diagnoses",
    "labs",
    "procedures",
    "prescriptions",
];

impl StructuredStore {
    /// Builds a store from records, sorting every table.
    pub fn from_records(records: impl IntoIterator<Item = PatientRecord>) -> Self {
        let patients = records
            .into_iter()
            .map(|mut r| {
                r.normalize();
                (r.demographics.patient_id.clone(), r)
            })
            .collect();
        StructuredStore { patients }
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.get(id)
    }

    pub fn patients(&self) -> impl Iterator<Item = (&str, &PatientRecord)> {
        self.patients.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }
}

fn read_table<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<(usize, T)>> {
    let path = dir.join(format!("{name}.csv"));
    if !path.exists() {
        return Err(Error::MissingTable(name.to_string()));
    }
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
    let table = format!("{name}.csv");
    let mut rows = Vec::new();
    for rec in reader.deserialize::<T>() {
        match rec {
            Ok(row) => rows.push((rows.len() + 1, row)),
            Err(e) => {
                let row = e
                    .position()
                    .map(|p| p.line() as usize - 1)
                    .unwrap_or(rows.len() + 1);
                return Err(Error::parse(table, row, e));
            }
        }
    }
    Ok(rows)
}

/// Loads the five tables from `dir` and checks every child row against
/// the demographics table.
pub fn read_structured(dir: &Path) -> Result<StructuredStore> {
    let demographics: Vec<(usize, Demographic)> = read_table(dir, "demographics")?;
    let diagnoses: Vec<(usize, DiagnosisRow)> = read_table(dir, "diagnoses")?;
    let labs: Vec<(usize, LabRow)> = read_table(dir, "labs")?;
    let procedures: Vec<(usize, ProcedureRow)> = read_table(dir, "procedures")?;
    let prescriptions: Vec<(usize, PrescriptionRow)> = read_table(dir, "prescriptions")?;

    let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();
    for (row, d) in demographics {
        if patients.contains_key(&d.patient_id) {
            return Err(Error::parse(
                "demographics.csv",
                row,
                format!("duplicate patient {}", d.patient_id),
            ));
        }
        patients.insert(d.patient_id.clone(), PatientRecord::new(d));
    }

    fn attach<T>(
        patients: &mut BTreeMap<String, PatientRecord>,
        table: &str,
        rows: Vec<(usize, T)>,
        pid: impl Fn(&T) -> &str,
        push: impl Fn(&mut PatientRecord, T),
    ) -> Result<()> {
        for (row, r) in rows {
            let rec = patients
                .get_mut(pid(&r))
                .ok_or_else(|| Error::OrphanRow {
                    table: table.to_string(),
                    row,
                    patient_id: pid(&r).to_string(),
                })?;
            push(rec, r);
        }
        Ok(())
    }
    attach(&mut patients, "diagnoses", diagnoses, |r| &r.patient_id, |p, r| p.diagnoses.push(r))?;
    attach(&mut patients, "labs", labs, |r| &r.patient_id, |p, r| p.labs.push(r))?;
    attach(&mut patients, "procedures", procedures, |r| &r.patient_id, |p, r| p.procedures.push(r))?;
    attach(
        &mut patients,
        "prescriptions",
        prescriptions,
        |r| &r.patient_id,
        |p, r| p.prescriptions.push(r),
    )?;
    Ok(StructuredStore::from_records(patients.into_values()))
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: impl Iterator<Item = T>) -> Result<()> {
    let path = dir.join(format!("{name}.csv"));
    let to_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(&path).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Writes the five tables, rows ordered by patient then date.
pub fn write_structured(dir: &Path, store: &StructuredStore) -> Result<()> {
    let recs = || store.patients.values();
    write_table(dir, "demographics", recs().map(|r| &r.demographics))?;
    write_table(dir, "diagnoses", recs().flat_map(|r| &r.diagnoses))?;
    write_table(dir, "labs", recs().flat_map(|r| &r.labs))?;
    write_table(dir, "procedures", recs().flat_map(|r| &r.procedures))?;
    write_table(dir, "prescriptions", recs().flat_map(|r| &r.prescriptions))?;
    Ok(())
}

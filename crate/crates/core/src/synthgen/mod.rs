//! Deterministic synthetic corpora: coded tables, Spanish-style discharge
//! reports and the ground truth they were rendered from.
//!
//! Every patient draws from its own ChaCha stream, so patients can be
//! generated in parallel and the output depends only on the seed. Each
//! patient draws the same uniforms whatever the noise knobs are set to,
//! which nests the noise: raising a missingness or dropout rate only ever
//! removes more of the same facts.

mod config;
mod render;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{plant_signal, CategoryRates, GenConfig, Preset};
pub use render::format_units;

use crate::dataset::{read_jsonl, write_jsonl};
use crate::ingest::{
    sort_reports, write_reports, write_structured, Demographic, DiagnosisRow, LabRow, PatientRecord,
    PrescriptionRow, ProcedureRow, ReportDocument, StructuredStore,
};
use crate::labeler::{AfStatus, Label};
use crate::report2vector::{Lexicon, PatternSet, AF_FEATURE};
use crate::schema::{Category, FeatureSchema, ValueKind};
use crate::structured2vector::{age_at, CodeKind, CodeMap};
use crate::vector::Value;
use crate::{Date, Error, Result};

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

/// Features whose values carry the planted label signal.
pub const SIGNAL_FEATURES: [&str; 2] = ["nt_probnp", "sleep_apnea"];

const AF_TYPES: [(&str, f64); 3] = [("paroxysmal", 0.5), ("persistent", 0.3), ("permanent", 0.2)];

const PREVALENCE: &[(&str, f64)] = &[
    ("smoker", 0.2),
    ("alcohol_use", 0.1),
    ("hypertension", 0.6),
    ("diabetes", 0.25),
    ("heart_failure", 0.2),
    ("stroke_tia", 0.1),
    ("vascular_disease", 0.15),
    ("copd", 0.12),
    ("dyslipidemia", 0.45),
    ("obesity", 0.3),
    ("chronic_kidney_disease", 0.15),
    ("ischemic_heart_disease", 0.15),
    ("sleep_apnea", 0.3),
    ("doac", 0.4),
    ("vka", 0.3),
    ("beta_blocker", 0.5),
    ("statin", 0.45),
    ("diuretic", 0.35),
    ("ace_inhibitor", 0.3),
    ("arb", 0.2),
    ("proton_pump_inhibitor", 0.3),
];
const DEFAULT_PREVALENCE: f64 = 0.1;

/// (feature, low, high, decimals): values are `units / 10^decimals` with
/// units uniform in `low..=high`.
const NUMERIC_RANGES: &[(&str, i64, i64, u32)] = &[
    ("weight", 500, 1100, 1),
    ("height", 150, 195, 0),
    ("egfr", 20, 110, 0),
    ("albumin", 28, 48, 1),
    ("crp", 5, 400, 1),
    ("nt_probnp", 100, 3000, 0),
    ("hemoglobin", 90, 170, 1),
    ("creatinine", 5, 25, 1),
    ("potassium", 33, 55, 1),
    ("sodium", 130, 148, 0),
    ("glucose", 70, 220, 0),
    ("hba1c", 48, 95, 1),
    ("tsh", 3, 60, 1),
    ("total_cholesterol", 120, 280, 0),
    ("ldl_cholesterol", 50, 190, 0),
    ("hdl_cholesterol", 30, 80, 0),
    ("triglycerides", 60, 300, 0),
    ("troponin", 3, 60, 0),
    ("platelets", 120, 400, 0),
    ("inr", 9, 35, 1),
    ("lvef", 25, 70, 0),
    ("la_diameter", 32, 55, 0),
];

/// NT-proBNP ranges for informative patients by label.
const SIGNAL_HIGH: (i64, i64) = (1500, 3000);
const SIGNAL_LOW: (i64, i64) = (100, 900);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatientKind {
    /// AF onset inside the study window with a confirming report.
    Cohort,
    /// AF already listed in past history before the coded onset.
    PriorHistory,
    /// AF coded but no report near the onset says so.
    NoTextEvidence,
    /// AF coded before the study window starts.
    PreStudy,
    NoAf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub day: i64,
    pub date: Date,
    pub status: AfStatus,
    pub report_id: String,
    pub dropped: bool,
}

/// A fact written into a report; `Absent` means a negated sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFact {
    pub report_id: String,
    pub feature_id: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub patient_id: String,
    pub kind: PatientKind,
    /// Coded AF onset, or the reference date of a patient without AF.
    pub onset_date: Date,
    /// Planted label; `None` outside the cohort.
    pub label: Option<Label>,
    pub signal_informative: bool,
    /// True value of every predictive feature at the onset date.
    pub features: BTreeMap<String, Value>,
    pub report_facts: Vec<ReportFact>,
    pub events: Vec<PlantedEvent>,
}

impl GroundTruthRecord {
    pub fn in_cohort(&self) -> bool {
        self.kind == PatientKind::Cohort
    }

    pub fn feature(&self, id: &str) -> &Value {
        self.features.get(id).unwrap_or(&Value::Unknown)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub reports: Vec<ReportDocument>,
    pub store: StructuredStore,
    pub truth: Vec<GroundTruthRecord>,
}

impl Corpus {
    /// Writes `reports.jsonl`, the five coded tables and `ground_truth.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_reports(&dir.join(REPORTS_FILE), &self.reports)?;
        write_structured(dir, &self.store)?;
        write_jsonl(&dir.join(GROUND_TRUTH_FILE), &self.truth)
    }

    pub fn labeled(&self) -> impl Iterator<Item = &GroundTruthRecord> {
        self.truth
            .iter()
            .filter(|t| t.label.is_some_and(|l| l != Label::Excluded))
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    read_jsonl(path)
}

/// The vocabulary the generator renders with.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub schema: FeatureSchema,
    pub lexicon: Lexicon,
    pub patterns: PatternSet,
    pub code_map: CodeMap,
}

impl Vocabulary {
    pub fn shipped() -> Self {
        let schema = FeatureSchema::default_schema();
        Vocabulary {
            lexicon: Lexicon::default_for(&schema),
            patterns: PatternSet::default_for(&schema),
            code_map: CodeMap::default_for(&schema),
            schema,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Cohort(Label),
    Decoy(PatientKind),
}

fn plans(config: &GenConfig) -> Vec<Plan> {
    let n = config.n_patients;
    let n_pos = config.n_positive();
    let n_excluded = (n as f64 * config.excluded_rate).round() as usize;
    let n_decoys = (n as f64 * config.decoy_rate).round() as usize;
    let decoys = [
        PatientKind::PriorHistory,
        PatientKind::NoTextEvidence,
        PatientKind::PreStudy,
        PatientKind::NoAf,
    ];
    let mut plans: Vec<Plan> = std::iter::repeat_n(Plan::Cohort(Label::Progression), n_pos)
        .chain(std::iter::repeat_n(Plan::Cohort(Label::NoProgression), n - n_pos))
        .chain(std::iter::repeat_n(Plan::Cohort(Label::Excluded), n_excluded))
        .chain((0..n_decoys).map(|i| Plan::Decoy(decoys[i % decoys.len()])))
        .collect();
    plans.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    plans
}

/// Generates a corpus with the shipped vocabulary.
pub fn generate(config: &GenConfig) -> Result<Corpus> {
    generate_with(config, &Vocabulary::shipped())
}

pub fn generate_with(config: &GenConfig, vocab: &Vocabulary) -> Result<Corpus> {
    config.validate()?;
    for def in vocab.schema.predictive() {
        if def.value_kind == ValueKind::Numeric
            && def.id != "age"
            && def.id != "bmi"
            && !NUMERIC_RANGES.iter().any(|r| r.0 == def.id)
        {
            return Err(Error::InvalidConfig(format!("no value range for numeric feature `{}`", def.id)));
        }
    }
    let plans: Vec<(usize, Plan)> = plans(config).into_iter().enumerate().collect();
    let patients = crate::par::map(&plans, |&(i, plan)| PatientGen::new(config, vocab, i, plan).run());

    let mut reports = Vec::new();
    let mut records = Vec::with_capacity(patients.len());
    let mut truth = Vec::with_capacity(patients.len());
    for (docs, rec, t) in patients {
        reports.extend(docs);
        records.push(rec);
        truth.push(t);
    }
    sort_reports(&mut reports);
    truth.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(Corpus {
        reports,
        store: StructuredStore::from_records(records),
        truth,
    })
}

/// Uniforms drawn for every feature whatever the knobs say.
#[derive(Debug, Clone, Copy)]
struct NoiseDraws {
    structured: f64,
    coverage: f64,
    negation: f64,
    cue: f64,
    date: f64,
    stale: f64,
    stale_value: f64,
    future: f64,
    future_value: f64,
}

impl NoiseDraws {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        NoiseDraws {
            structured: rng.random(),
            coverage: rng.random(),
            negation: rng.random(),
            cue: rng.random(),
            date: rng.random(),
            stale: rng.random(),
            stale_value: rng.random(),
            future: rng.random(),
            future_value: rng.random(),
        }
    }
}

fn pick_units(u: f64, lo: i64, hi: i64) -> i64 {
    lo + ((u * (hi - lo + 1) as f64) as i64).min(hi - lo)
}

fn days(u: f64, lo: i64, hi: i64) -> Duration {
    Duration::days(pick_units(u, lo, hi))
}

fn units_value(units: i64, decimals: u32) -> Value {
    Value::Number(if decimals == 0 {
        units as f64
    } else {
        units as f64 / 10f64.powi(decimals as i32)
    })
}

struct PatientGen<'a> {
    config: &'a GenConfig,
    vocab: &'a Vocabulary,
    plan: Plan,
    patient_id: String,
    rng: ChaCha8Rng,
}

impl<'a> PatientGen<'a> {
    fn new(config: &'a GenConfig, vocab: &'a Vocabulary, index: usize, plan: Plan) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64 + 1);
        PatientGen {
            config,
            vocab,
            plan,
            patient_id: format!("P{:05}", index + 1),
            rng,
        }
    }

    fn u(&mut self) -> f64 {
        self.rng.random()
    }

    fn run(mut self) -> (Vec<ReportDocument>, PatientRecord, GroundTruthRecord) {
        let config = self.config;
        let vocab = self.vocab;
        let schema = &vocab.schema;
        let kind = match self.plan {
            Plan::Cohort(_) => PatientKind::Cohort,
            Plan::Decoy(k) => k,
        };
        let label = match self.plan {
            Plan::Cohort(l) => Some(l),
            Plan::Decoy(_) => None,
        };

        // dates
        let (u_onset, u_pre, u_birth) = (self.u(), self.u(), self.u());
        let start = config.study_start;
        let onset = if kind == PatientKind::PreStudy {
            start - days(u_pre, 1, 3 * 365)
        } else {
            start + days(u_onset, 0, 4 * 365 - 1)
        };
        let birth = onset - days(u_birth, 45 * 365, 90 * 365);
        let age = age_at(birth, onset).expect("birth precedes onset");

        // true values, as (value, units, decimals) for numerics
        let mut truth: BTreeMap<String, Value> = BTreeMap::new();
        let mut units: BTreeMap<String, (i64, u32)> = BTreeMap::new();
        for def in schema.predictive() {
            let u = self.u();
            let id = def.id.as_str();
            let value = match (def.value_kind, id) {
                (_, "age") => {
                    units.insert(id.into(), (age as i64, 0));
                    Value::Number(age as f64)
                }
                (_, "sex") => Value::Category(if u < 0.5 { "F" } else { "M" }.into()),
                (_, AF_FEATURE) => {
                    let mut acc = 0.0;
                    let t = AF_TYPES
                        .iter()
                        .find(|(_, p)| {
                            acc += p;
                            u < acc
                        })
                        .map_or(AF_TYPES[0].0, |(t, _)| t);
                    Value::Category(t.to_string())
                }
                (_, "bmi") => Value::Unknown,
                (ValueKind::Boolean3State, _) => {
                    let p = PREVALENCE.iter().find(|(f, _)| *f == id).map_or(DEFAULT_PREVALENCE, |x| x.1);
                    if u < p { Value::Present } else { Value::Absent }
                }
                (ValueKind::Numeric, _) => {
                    let &(_, lo, hi, dec) = NUMERIC_RANGES.iter().find(|r| r.0 == id).expect("checked range");
                    let k = pick_units(u, lo, hi);
                    units.insert(id.into(), (k, dec));
                    units_value(k, dec)
                }
                _ => Value::Unknown,
            };
            truth.insert(id.to_string(), value);
        }
        if let (Some(&(w, _)), Some(&(h, _))) = (units.get("weight"), units.get("height")) {
            // weight in tenths of kg, height in cm; BMI to one decimal
            let bmi = (w as f64 * 10000.0 / (h * h) as f64).round() as i64;
            units.insert("bmi".into(), (bmi, 1));
            truth.insert("bmi".into(), units_value(bmi, 1));
        }
        if kind == PatientKind::NoAf {
            truth.insert(AF_FEATURE.into(), Value::Unknown);
        }

        // planted signal
        let (u_inf, u_high, u_low) = (self.u(), self.u(), self.u());
        let informative = matches!(label, Some(Label::Progression | Label::NoProgression))
            && u_inf < config.signal_strength;
        if informative {
            let positive = label == Some(Label::Progression);
            let (lo, hi) = if positive { SIGNAL_HIGH } else { SIGNAL_LOW };
            let k = pick_units(if positive { u_high } else { u_low }, lo, hi);
            units.insert("nt_probnp".into(), (k, 0));
            truth.insert("nt_probnp".into(), units_value(k, 0));
            truth.insert("sleep_apnea".into(), if positive { Value::Present } else { Value::Absent });
        }

        // coded tables and the onset report
        let pid = self.patient_id.clone();
        let onset_report_id = format!("{pid}-R01");
        let mut rec = PatientRecord::new(Demographic {
            patient_id: pid.clone(),
            birth_date: birth,
            sex: None,
        });
        let mut onset_doc = render::OnsetReport::default();
        let mut facts = Vec::new();
        let draws: Vec<NoiseDraws> = schema.predictive().iter().map(|_| NoiseDraws::draw(&mut self.rng)).collect();
        for (def, d) in schema.predictive().iter().zip(draws) {
            let id = def.id.as_str();
            let value = truth[id].clone();
            if value.is_unknown() {
                continue;
            }
            let coded = d.structured >= config.structured_missingness.get(def.category);
            let covered = d.coverage < config.report_coverage;
            let mut fact = |v: Value| {
                facts.push(ReportFact {
                    report_id: onset_report_id.clone(),
                    feature_id: id.to_string(),
                    value: v,
                })
            };
            match def.value_kind {
                ValueKind::Boolean3State => {
                    if value == Value::Present && coded {
                        if let Some(c) = vocab.code_map.code_for(id, None) {
                            let date = onset - days(d.date, 30, 3000);
                            push_code(&mut rec, c.kind, c.system, c.code, date, None);
                        }
                    }
                    let treatment = def.category == Category::Treatment;
                    let line = match (&value, covered) {
                        (Value::Present, true) => render::affirmed(&vocab.lexicon, id, None),
                        (Value::Absent, true) if d.negation < config.negation_rate => {
                            render::negated(&vocab.lexicon, id, treatment, d.cue)
                        }
                        _ => None,
                    };
                    if let Some(line) = line {
                        fact(value.clone());
                        match def.category {
                            Category::Treatment => onset_doc.treatment.push(line),
                            _ => onset_doc.history.push(line),
                        }
                    }
                }
                ValueKind::Categorical if id == "sex" => {
                    if coded {
                        rec.demographics.sex = value.as_category().map(str::to_string);
                    }
                }
                ValueKind::Categorical if id == AF_FEATURE => {
                    let t = value.as_category().expect("categorical");
                    if let Some(c) = vocab.code_map.code_for(AF_FEATURE, Some(t)) {
                        push_code(&mut rec, c.kind, c.system, c.code, onset, None);
                    }
                    let surface = if covered {
                        fact(value.clone());
                        vocab.lexicon.preferred_surface(AF_FEATURE, Some(t))
                    } else {
                        vocab.lexicon.preferred_surface(AF_FEATURE, None)
                    };
                    let surface = surface.unwrap_or("fibrilación auricular");
                    onset_doc
                        .current
                        .push(format!("ECG: {surface} con respuesta ventricular rápida."));
                }
                ValueKind::Numeric => {
                    let (k, dec) = units[id];
                    if id == "age" {
                        let phrase = covered
                            .then(|| render::numeric_phrase(&vocab.patterns, id, &format_units(k, dec, ',')))
                            .flatten();
                        match phrase {
                            Some(p) => {
                                fact(value.clone());
                                onset_doc.current.insert(0, format!("{p} que acude por palpitaciones."));
                            }
                            None => onset_doc.current.insert(0, "Paciente que acude por palpitaciones.".into()),
                        }
                        continue;
                    }
                    if coded {
                        self.push_numeric(&mut rec, id, k, dec, onset, &d);
                    }
                    if covered {
                        if let Some(p) = render::numeric_phrase(&vocab.patterns, id, &format_units(k, dec, ',')) {
                            fact(value.clone());
                            onset_doc.exam.push(format!("{p}."));
                        }
                    }
                }
                _ => {}
            }
        }
        if kind == PatientKind::NoAf {
            onset_doc.current.push("ECG: ritmo sinusal.".into());
        }

        // decoy adjustments
        let (u_shift, u_prior) = (self.u(), self.u());
        let onset_report_date = match kind {
            PatientKind::NoTextEvidence => onset + days(u_shift, 8, 60),
            _ => onset,
        };
        let mut docs = vec![ReportDocument::new(&pid, &onset_report_id, onset_report_date, onset_doc.render())];
        if kind == PatientKind::PriorHistory {
            docs.push(ReportDocument::new(
                &pid,
                format!("{pid}-R00"),
                onset - days(u_prior, 100, 700),
                render::prior_history_report(),
            ));
        }

        // follow-up reports
        let events = match label {
            Some(l) => self.follow_ups(l, onset),
            None => Vec::new(),
        };
        for e in events.iter().filter(|e| !e.dropped) {
            let text = match e.status {
                AfStatus::AfEpisode => render::af_episode_report(onset.year()),
                AfStatus::SinusRhythm => render::sinus_report(onset.year()),
                AfStatus::NoInfo => render::no_info_report(),
            };
            docs.push(ReportDocument::new(&pid, &e.report_id, e.date, text));
        }

        let truth_rec = GroundTruthRecord {
            patient_id: pid,
            kind,
            onset_date: onset,
            label,
            signal_informative: informative,
            features: truth,
            report_facts: facts,
            events,
        };
        (docs, rec, truth_rec)
    }

    /// Lab rows (with stale and post-onset distractors) or a numeric
    /// procedure outcome.
    fn push_numeric(&self, rec: &mut PatientRecord, id: &str, k: i64, dec: u32, onset: Date, d: &NoiseDraws) {
        let vocab = self.vocab;
        if let Some((code, rule)) = vocab.code_map.lab_for(id) {
            let (num, den) = rule.scale.parts();
            let p10 = 10i64.pow(dec);
            let in_lab_units = |k: i64| (k * den) as f64 / (p10 * num) as f64;
            let &(_, lo, hi, _) = NUMERIC_RANGES.iter().find(|r| r.0 == id).expect("range");
            let mut row = |date: Date, k: i64| {
                rec.labs.push(LabRow {
                    patient_id: self.patient_id.clone(),
                    date,
                    test_code: code.to_string(),
                    value: in_lab_units(k),
                    unit: rule.unit.clone(),
                })
            };
            row(onset - days(d.date, 0, 20), k);
            if d.stale < 0.5 {
                row(onset - days(d.stale, 60, 400), pick_units(d.stale_value, lo, hi));
            }
            if d.future < 0.5 {
                row(onset + days(d.future, 10, 300), pick_units(d.future_value, lo, hi));
            }
        } else if let Some(c) = vocab.code_map.code_for(id, None) {
            let outcome = match c.scale {
                Some(s) if s == crate::report2vector::Scale::ONE => format_units(k, dec, '.'),
                _ => return,
            };
            push_code(rec, c.kind, c.system, c.code, onset - days(d.date, 0, 10), Some(outcome));
        }
    }

    /// Follow-up events realizing the planted label; dropout draws are
    /// made for every event.
    fn follow_ups(&mut self, label: Label, onset: Date) -> Vec<PlantedEvent> {
        let u: Vec<f64> = (0..8).map(|_| self.u()).collect();
        let mut planned: Vec<(i64, AfStatus)> = Vec::new();
        match label {
            Label::Progression => {
                let d1 = pick_units(u[0], 35, 700);
                planned.push((d1, AfStatus::AfEpisode));
                if u[1] < 0.5 {
                    planned.push((pick_units(u[2], 31, d1 - 1), AfStatus::SinusRhythm));
                }
                if u[3] < 0.3 {
                    planned.push((pick_units(u[4], 3, 25), AfStatus::AfEpisode));
                }
            }
            Label::NoProgression => {
                let s = pick_units(u[0], 35, 720);
                planned.push((s, AfStatus::SinusRhythm));
                if u[1] < 0.5 {
                    planned.push((pick_units(u[2], s + 1, s + 200), AfStatus::SinusRhythm));
                }
                if u[3] < 0.3 {
                    planned.push((pick_units(u[4], 3, 25), AfStatus::AfEpisode));
                } else if u[3] > 0.7 {
                    planned.push((pick_units(u[4], 925, 1000), AfStatus::AfEpisode));
                }
            }
            Label::Excluded => match (u[0] * 3.0) as u32 {
                0 => planned.push((pick_units(u[2], 3, 25), AfStatus::SinusRhythm)),
                1 => planned.push((pick_units(u[2], 925, 1000), AfStatus::AfEpisode)),
                _ => {}
            },
        }
        if u[5] < 0.5 {
            let day = pick_units(u[6], 1, 1000);
            if planned.iter().all(|(d, _)| *d != day) {
                planned.push((day, AfStatus::NoInfo));
            }
        }
        planned.sort();
        let drops: Vec<f64> = (0..planned.len()).map(|_| self.u()).collect();
        planned
            .into_iter()
            .zip(drops)
            .enumerate()
            .map(|(i, ((day, status), u_drop))| PlantedEvent {
                day,
                date: onset + Duration::days(day),
                status,
                report_id: format!("{}-R{:02}", self.patient_id, i + 2),
                dropped: u_drop < self.config.report_dropout_rate,
            })
            .collect()
    }
}

fn push_code(rec: &mut PatientRecord, kind: CodeKind, system: &str, code: &str, date: Date, outcome: Option<String>) {
    let patient_id = rec.demographics.patient_id.clone();
    match kind {
        CodeKind::Diagnosis => rec.diagnoses.push(DiagnosisRow {
            patient_id,
            date,
            code_system: system.to_string(),
            code: code.to_string(),
        }),
        CodeKind::Prescription => rec.prescriptions.push(PrescriptionRow {
            patient_id,
            date,
            atc_code: code.to_string(),
        }),
        CodeKind::Procedure => rec.procedures.push(ProcedureRow {
            patient_id,
            date,
            code: code.to_string(),
            outcome,
        }),
    }
}

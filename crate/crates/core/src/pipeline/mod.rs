//! The stages wired together through files in an output directory. Each
//! stage reads only artifacts on disk and records what it wrote in
//! `manifest.jsonl`, so stages can be run one at a time or all at once with
//! the same result.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{
    sha256_hex, BaselineSettings, CohortSettings, LoadedResources, PipelineConfig, ResourcePaths,
    ScoreSettings, StructuredSettings,
};
pub use manifest::{read_manifest, record, ManifestEntry, CONFIG_DIR, MANIFEST_FILE};

use crate::baseline::{export_dataset, BaselineModel};
use crate::cohort::{confirmed, select_candidates, CohortRow, OnsetValidator, RuleValidator};
use crate::dataset::{provenance_path, read_dataset, read_json, read_rows, write_conflicts, write_dataset, write_json, write_rows};
use crate::eval::{enrichment_report, label_agreement, metrics, Metrics};
use crate::ingest::{read_reports, read_structured, reports_by_patient, ReportDocument, TABLES};
use crate::labeler::{label_patient, Label, LabelRow};
use crate::merger::merge;
use crate::par;
use crate::report2vector::{vector_from_analyzed, AnalyzedReport};
use crate::scores::{ScoreName, ScoreRow};
use crate::structured2vector::structured_to_vector;
use crate::synthgen::{self, read_ground_truth, Corpus, GenConfig, GROUND_TRUTH_FILE, REPORTS_FILE};
use crate::vector::{PatientVector, Value};
use crate::{Date, Error, Result};

pub const COHORT_FILE: &str = "cohort.csv";
pub const REPORT_VECTORS_FILE: &str = "report_vectors.csv";
pub const STRUCTURED_VECTORS_FILE: &str = "structured_vectors.csv";
pub const ENRICHED_FILE: &str = "enriched.csv";
pub const CONFLICTS_FILE: &str = "conflicts.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const EVAL_FILE: &str = "eval.json";
pub const ENRICHMENT_CSV_FILE: &str = "enrichment.csv";
pub const ENRICHMENT_JSON_FILE: &str = "enrichment.json";
pub const SYNTH_CONFIG_FILE: &str = "pipeline.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Cohort,
    ExtractReports,
    ExtractStructured,
    Merge,
    Label,
    Score,
    TrainBaseline,
    Evaluate,
    Report,
}

impl Stage {
    /// Every stage in run order.
    pub const ALL: [Stage; 9] = [
        Stage::Cohort,
        Stage::ExtractReports,
        Stage::ExtractStructured,
        Stage::Merge,
        Stage::Label,
        Stage::Score,
        Stage::TrainBaseline,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Cohort => "cohort",
            Stage::ExtractReports => "extract-reports",
            Stage::ExtractStructured => "extract-structured",
            Stage::Merge => "merge",
            Stage::Label => "label",
            Stage::Score => "score",
            Stage::TrainBaseline => "train-baseline",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Files the stage writes, relative to the output directory.
    pub fn artifacts(self) -> Vec<String> {
        let dataset = |f: &str| vec![f.to_string(), provenance_path(Path::new(f)).display().to_string()];
        match self {
            Stage::Cohort => vec![COHORT_FILE.into()],
            Stage::ExtractReports => dataset(REPORT_VECTORS_FILE),
            Stage::ExtractStructured => dataset(STRUCTURED_VECTORS_FILE),
            Stage::Merge => [dataset(ENRICHED_FILE), vec![CONFLICTS_FILE.into()]].concat(),
            Stage::Label => vec![LABELS_FILE.into()],
            Stage::Score => vec![SCORES_FILE.into()],
            Stage::TrainBaseline => [vec![MODEL_FILE.into()], dataset(TRAIN_FILE), dataset(TEST_FILE)].concat(),
            Stage::Evaluate => vec![EVAL_FILE.into()],
            Stage::Report => vec![ENRICHMENT_CSV_FILE.into(), ENRICHMENT_JSON_FILE.into()],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Cohort patients with a 1 or 0 label.
    pub labeled_patients: usize,
    pub excluded_patients: usize,
    pub train_patients: usize,
    pub test_patients: usize,
    /// Baseline on the held-out split.
    pub baseline_test: Metrics,
    /// Each score on the held-out split.
    pub scores_test: BTreeMap<String, Metrics>,
    /// Each score on every labeled patient.
    pub scores_labeled: BTreeMap<String, Metrics>,
    /// Comparison with `ground_truth.jsonl`, when the data directory has one.
    pub oracle: Option<OracleCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub cohort_precision: f64,
    pub cohort_recall: f64,
    /// Silver vs planted labels, excluded patients left out.
    pub label_agreement: f64,
    /// Share of confirmed true-cohort patients whose label (including -1)
    /// matches the planted one.
    pub label_exact_match: f64,
    /// Predictive cells compared between enriched and true vectors.
    pub feature_cells: usize,
    pub feature_match: f64,
}

fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        _ => a == b,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// A configured pipeline with its resources loaded.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub resources: LoadedResources,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let resources = config.load_resources()?;
        Ok(Pipeline { config, resources })
    }

    pub fn config_hash(&self) -> &str {
        &self.resources.config_hash
    }

    fn data(&self, name: &str) -> PathBuf {
        self.config.data_dir.join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    /// Runs one stage and records its artifacts.
    pub fn run(&self, stage: Stage) -> Result<()> {
        log::info!("stage {stage}: start");
        let out_dir = &self.config.out_dir;
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e).in_stage(stage.name()))?;
        par::with_jobs(self.config.jobs, || self.run_stage(stage))
            .and_then(|()| {
                let names = stage.artifacts();
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                record(
                    out_dir,
                    stage.name(),
                    &names,
                    &self.resources.config_hash,
                    &self.resources.canonical_config,
                    self.config.seed,
                )
            })
            .map_err(|e| e.in_stage(stage.name()))?;
        log::info!("stage {stage}: done");
        Ok(())
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.into_iter().try_for_each(|s| self.run(s))
    }

    fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Cohort => self.cohort(),
            Stage::ExtractReports => self.extract_reports(),
            Stage::ExtractStructured => self.extract_structured(),
            Stage::Merge => self.merge(),
            Stage::Label => self.label(),
            Stage::Score => self.score(),
            Stage::TrainBaseline => self.train_baseline(),
            Stage::Evaluate => self.evaluate(),
            Stage::Report => self.report(),
        }
    }

    fn reports(&self) -> Result<Vec<ReportDocument>> {
        read_reports(&self.data(REPORTS_FILE))
    }

    fn onsets(&self) -> Result<Vec<(String, Date)>> {
        let rows: Vec<CohortRow> = read_rows(&self.out(COHORT_FILE))?;
        Ok(confirmed(&rows).into_iter().collect())
    }

    fn analyze_all(&self, docs: Option<&Vec<&ReportDocument>>, until: Option<Date>) -> Vec<AnalyzedReport> {
        docs.into_iter()
            .flatten()
            .filter(|d| until.is_none_or(|u| d.date <= u))
            .map(|d| self.resources.text.analyze(d))
            .collect()
    }

    fn cohort(&self) -> Result<()> {
        let store = read_structured(&self.config.data_dir)?;
        let reports = self.reports()?;
        let by_patient = reports_by_patient(&reports);
        let candidates = select_candidates(&store, &self.resources.code_map, self.config.cohort.study_start);
        let validator = RuleValidator {
            window_days: self.config.cohort.validation_window_days,
        };
        let rows = par::map(&candidates, |c| {
            let analyzed = self.analyze_all(by_patient.get(c.patient_id.as_str()), None);
            CohortRow::new(c, &validator.validate(c, &analyzed))
        });
        log::info!(
            "{} candidates, {} confirmed",
            rows.len(),
            confirmed(&rows).len()
        );
        write_rows(&self.out(COHORT_FILE), &rows)
    }

    fn extract_reports(&self) -> Result<()> {
        let onsets = self.onsets()?;
        let reports = self.reports()?;
        let by_patient = reports_by_patient(&reports);
        let schema = &self.resources.schema;
        let vectors = par::map(&onsets, |(pid, onset)| {
            let analyzed = self.analyze_all(by_patient.get(pid.as_str()), Some(*onset));
            vector_from_analyzed(pid, analyzed, schema, *onset)
        });
        write_dataset(&vectors, schema, &self.out(REPORT_VECTORS_FILE))
    }

    fn extract_structured(&self) -> Result<()> {
        let onsets = self.onsets()?;
        let store = read_structured(&self.config.data_dir)?;
        let schema = &self.resources.schema;
        let options = self.config.structured_options();
        let vectors = par::try_map(&onsets, |(pid, onset)| {
            structured_to_vector(&store, pid, schema, &self.resources.code_map, *onset, options)
                .map_err(|e| e.for_patient(pid))
        })?;
        write_dataset(&vectors, schema, &self.out(STRUCTURED_VECTORS_FILE))
    }

    fn merge(&self) -> Result<()> {
        let schema = &self.resources.schema;
        let structured = read_dataset(schema, &self.out(STRUCTURED_VECTORS_FILE))?;
        let reports = read_dataset(schema, &self.out(REPORT_VECTORS_FILE))?;
        let mut by_id: BTreeMap<&str, &PatientVector> = reports.iter().map(|v| (v.patient_id.as_str(), v)).collect();
        let mut pairs = Vec::with_capacity(structured.len());
        for s in &structured {
            let r = by_id
                .remove(s.patient_id.as_str())
                .ok_or_else(|| Error::PatientSetMismatch(format!("{} has no report vector", s.patient_id)))?;
            pairs.push((s, r));
        }
        if let Some(extra) = by_id.keys().next() {
            return Err(Error::PatientSetMismatch(format!("{extra} has no structured vector")));
        }
        let merged = par::try_map(&pairs, |(s, r)| {
            merge(s, r, schema, &self.config.merge).map_err(|e| e.for_patient(&s.patient_id))
        })?;
        let mut vectors = Vec::with_capacity(merged.len());
        let mut conflicts = Vec::new();
        for (v, c) in merged {
            vectors.push(v);
            conflicts.extend(c);
        }
        log::info!("{} vectors merged, {} conflicts", vectors.len(), conflicts.len());
        write_dataset(&vectors, schema, &self.out(ENRICHED_FILE))?;
        write_conflicts(&self.out(CONFLICTS_FILE), &conflicts)
    }

    fn label(&self) -> Result<()> {
        let onsets = self.onsets()?;
        let reports = self.reports()?;
        let by_patient = reports_by_patient(&reports);
        let rows = par::map(&onsets, |(pid, onset)| {
            let analyzed = self.analyze_all(by_patient.get(pid.as_str()), None);
            label_patient(pid, *onset, &analyzed, &self.config.window)
        });
        write_rows(&self.out(LABELS_FILE), &rows)
    }

    fn score(&self) -> Result<()> {
        let schema = &self.resources.schema;
        let vectors = read_dataset(schema, &self.out(ENRICHED_FILE))?;
        let threshold = self.config.scores.threshold;
        let rows = par::try_map(&vectors, |v| {
            ScoreRow::compute(v, schema, threshold).map_err(|e| e.for_patient(&v.patient_id))
        })?;
        write_rows(&self.out(SCORES_FILE), &rows)
    }

    fn labels(&self) -> Result<BTreeMap<String, Label>> {
        let rows: Vec<LabelRow> = read_rows(&self.out(LABELS_FILE))?;
        Ok(rows.into_iter().map(|r| (r.patient_id, r.label)).collect())
    }

    fn train_baseline(&self) -> Result<()> {
        let schema = &self.resources.schema;
        let labels = self.labels()?;
        let mut labeled = Vec::new();
        for mut v in read_dataset(schema, &self.out(ENRICHED_FILE))? {
            let label = *labels
                .get(&v.patient_id)
                .ok_or_else(|| Error::PatientSetMismatch(format!("{} has no label", v.patient_id)))?;
            if label != Label::Excluded {
                v.set_label(schema, Some(label));
                labeled.push(v);
            }
        }
        let (train, test) = export_dataset(
            &labeled,
            schema,
            &self.config.out_dir,
            self.config.baseline.train_fraction,
            self.config.seed,
        )?;
        log::info!("training on {} patients, {} held out", train.len(), test.len());
        let model = BaselineModel::fit(&train, schema, self.config.fit_params())?;
        write_json(&self.out(MODEL_FILE), &model)
    }

    fn evaluate(&self) -> Result<()> {
        let schema = &self.resources.schema;
        let labels = self.labels()?;
        let scores: BTreeMap<String, ScoreRow> = read_rows::<ScoreRow>(&self.out(SCORES_FILE))?
            .into_iter()
            .map(|r| (r.patient_id.clone(), r))
            .collect();
        let model: BaselineModel = read_json(&self.out(MODEL_FILE))?;
        let train = read_dataset(schema, &self.out(TRAIN_FILE))?;
        let test = read_dataset(schema, &self.out(TEST_FILE))?;

        let score_metrics = |ids: &[(&str, Label)]| -> Result<BTreeMap<String, Metrics>> {
            ScoreName::ALL
                .iter()
                .map(|&name| {
                    let preds = ids
                        .iter()
                        .map(|(id, _)| {
                            scores
                                .get(*id)
                                .map(|r| r.prediction(name))
                                .ok_or_else(|| Error::PatientSetMismatch(format!("{id} has no scores")))
                        })
                        .collect::<Result<Vec<bool>>>()?;
                    let golds: Vec<Label> = ids.iter().map(|(_, l)| *l).collect();
                    Ok((name.as_str().to_string(), metrics(&preds, &golds)?))
                })
                .collect()
        };

        let test_ids: Vec<(&str, Label)> = test
            .iter()
            .map(|v| Ok((v.patient_id.as_str(), v.label(schema).ok_or(Error::ExcludedLabelPresent)?)))
            .collect::<Result<_>>()?;
        let preds = par::try_map(&test, |v| model.predict(v, schema).map(|p| p.positive))?;
        let golds: Vec<Label> = test_ids.iter().map(|(_, l)| *l).collect();
        let baseline_test = metrics(&preds, &golds)?;

        let labeled: Vec<(&str, Label)> = labels
            .iter()
            .filter(|(_, l)| **l != Label::Excluded)
            .map(|(id, l)| (id.as_str(), *l))
            .collect();

        let truth_path = self.data(GROUND_TRUTH_FILE);
        let oracle = if truth_path.exists() {
            Some(self.oracle_check(&truth_path, &labels)?)
        } else {
            None
        };
        let report = EvalReport {
            labeled_patients: labeled.len(),
            excluded_patients: labels.len() - labeled.len(),
            train_patients: train.len(),
            test_patients: test.len(),
            baseline_test,
            scores_test: score_metrics(&test_ids)?,
            scores_labeled: score_metrics(&labeled)?,
            oracle,
        };
        log::info!(
            "baseline held-out MCC {:.3}, accuracy {:.3}",
            report.baseline_test.mcc,
            report.baseline_test.accuracy
        );
        write_json(&self.out(EVAL_FILE), &report)
    }

    fn oracle_check(&self, truth_path: &Path, labels: &BTreeMap<String, Label>) -> Result<OracleCheck> {
        let schema = &self.resources.schema;
        let truth = read_ground_truth(truth_path)?;
        let onsets = self.onsets()?;
        let selected: BTreeSet<&str> = onsets.iter().map(|(p, _)| p.as_str()).collect();
        let true_cohort: BTreeSet<&str> = truth.iter().filter(|t| t.in_cohort()).map(|t| t.patient_id.as_str()).collect();
        let hits = selected.intersection(&true_cohort).count();

        let planted: BTreeMap<String, Label> = truth
            .iter()
            .filter_map(|t| Some((t.patient_id.clone(), t.label?)))
            .collect();
        let exact = labels.iter().filter(|(id, l)| planted.get(*id) == Some(*l)).count();
        let shared = labels.keys().filter(|id| planted.contains_key(*id)).count();

        let enriched = read_dataset(schema, &self.out(ENRICHED_FILE))?;
        let by_id: BTreeMap<&str, _> = truth.iter().map(|t| (t.patient_id.as_str(), t)).collect();
        let (mut cells, mut matched) = (0usize, 0usize);
        for v in &enriched {
            let Some(t) = by_id.get(v.patient_id.as_str()).filter(|t| t.in_cohort()) else { continue };
            for (def, fv) in schema.predictive().iter().zip(&v.values) {
                cells += 1;
                matched += usize::from(values_match(&fv.value, t.feature(&def.id)));
            }
        }
        Ok(OracleCheck {
            cohort_precision: ratio(hits, selected.len()),
            cohort_recall: ratio(hits, true_cohort.len()),
            label_agreement: label_agreement(labels, &planted).unwrap_or(0.0),
            label_exact_match: ratio(exact, shared),
            feature_cells: cells,
            feature_match: ratio(matched, cells),
        })
    }

    fn report(&self) -> Result<()> {
        let schema = &self.resources.schema;
        let original = read_dataset(schema, &self.out(STRUCTURED_VECTORS_FILE))?;
        let enriched = read_dataset(schema, &self.out(ENRICHED_FILE))?;
        let report = enrichment_report(&original, &enriched, schema)?;
        report.write_csv(&self.out(ENRICHMENT_CSV_FILE))?;
        report.write_json(&self.out(ENRICHMENT_JSON_FILE))
    }
}

/// Generates a corpus into `out_dir` with a `pipeline.toml` that runs the
/// pipeline on it, and records the files in the manifest.
pub fn run_synth(gen: &GenConfig, out_dir: &Path, jobs: Option<usize>) -> Result<Corpus> {
    let stage = "synth";
    let corpus = par::with_jobs(jobs, || synthgen::generate(gen)).map_err(|e| e.in_stage(stage))?;
    corpus.write(out_dir).map_err(|e| e.in_stage(stage))?;
    let toml = format!(
        "# Runs the pipeline on this corpus: cohortforge all --config {SYNTH_CONFIG_FILE}\n\
         data_dir = \".\"\n\
         out_dir = \"out\"\n\
         seed = {}\n\
         \n\
         [cohort]\n\
         study_start = \"{}\"\n",
        gen.seed, gen.study_start
    );
    let path = out_dir.join(SYNTH_CONFIG_FILE);
    fs::write(&path, toml).map_err(|e| Error::io(&path, e).in_stage(stage))?;

    let canonical = serde_json::to_string_pretty(gen).expect("config serializes") + "\n";
    let hash = sha256_hex(canonical.as_bytes());
    let tables: Vec<String> = TABLES.iter().map(|t| format!("{t}.csv")).collect();
    let mut names: Vec<&str> = vec![REPORTS_FILE, GROUND_TRUTH_FILE, SYNTH_CONFIG_FILE];
    names.extend(tables.iter().map(String::as_str));
    record(out_dir, stage, &names, &hash, &canonical, gen.seed).map_err(|e| e.in_stage(stage))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests;

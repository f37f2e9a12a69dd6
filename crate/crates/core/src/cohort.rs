//! AF-onset cohort selection: coded diagnoses propose candidates, report
//! text confirms them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{ReportDocument, StructuredStore};
use crate::report2vector::{AnalyzedReport, TextResources};
use crate::structured2vector::CodeMap;
use crate::Date;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetCandidate {
    pub patient_id: String,
    pub onset_date: Date,
    pub trigger_code: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerificationStatus {
    Confirmed,
    RejectedPriorHistory,
    RejectedNoTextualEvidence,
}

impl VerificationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerificationStatus::Confirmed => "Confirmed",
            VerificationStatus::RejectedPriorHistory => "RejectedPriorHistory",
            VerificationStatus::RejectedNoTextualEvidence => "RejectedNoTextualEvidence",
        }
    }
}

impl fmt::Display for VerificationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerificationStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            VerificationStatus::Confirmed,
            VerificationStatus::RejectedPriorHistory,
            VerificationStatus::RejectedNoTextualEvidence,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub report_id: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub status: VerificationStatus,
    pub evidence: Vec<Evidence>,
}

/// Proposes one candidate per patient with an AF diagnosis code. The onset
/// is the earliest such code; patients whose onset predates `study_start`
/// are dropped. Output is ordered by patient id.
pub fn select_candidates(
    store: &StructuredStore,
    code_map: &CodeMap,
    study_start: Option<Date>,
) -> Vec<OnsetCandidate> {
    store
        .patients()
        .filter_map(|(pid, rec)| {
            // diagnoses are date-sorted
            let first = rec
                .diagnoses
                .iter()
                .find(|d| code_map.is_af_diagnosis(&d.code_system, &d.code))?;
            if study_start.is_some_and(|s| first.date < s) {
                return None;
            }
            Some(OnsetCandidate {
                patient_id: pid.to_string(),
                onset_date: first.date,
                trigger_code: first.code.clone(),
            })
        })
        .collect()
}

/// Text-based onset check. Implementations receive the candidate's reports
/// already analyzed, so a learned classifier can replace the rules.
pub trait OnsetValidator: Sync {
    fn validate(&self, candidate: &OnsetCandidate, reports: &[AnalyzedReport]) -> VerificationOutcome;
}

/// Rule validator: confirms when a report within `window_days` of the onset
/// affirms AF outside past history, and no report up to the onset lists AF
/// in past history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleValidator {
    pub window_days: i64,
}

impl Default for RuleValidator {
    fn default() -> Self {
        RuleValidator { window_days: 7 }
    }
}

impl OnsetValidator for RuleValidator {
    fn validate(&self, candidate: &OnsetCandidate, reports: &[AnalyzedReport]) -> VerificationOutcome {
        let onset = candidate.onset_date;
        let prior: Vec<Evidence> = reports
            .iter()
            .filter(|r| r.date <= onset)
            .flat_map(|r| {
                r.history_af_mentions().map(|m| Evidence {
                    report_id: r.report_id.clone(),
                    span: m.span,
                })
            })
            .collect();
        if !prior.is_empty() {
            return VerificationOutcome {
                status: VerificationStatus::RejectedPriorHistory,
                evidence: prior,
            };
        }
        let support: Vec<Evidence> = reports
            .iter()
            .filter(|r| (r.date - onset).num_days().abs() <= self.window_days)
            .flat_map(|r| {
                r.current_af_mentions().map(|m| Evidence {
                    report_id: r.report_id.clone(),
                    span: m.span,
                })
            })
            .collect();
        let status = if support.is_empty() {
            VerificationStatus::RejectedNoTextualEvidence
        } else {
            VerificationStatus::Confirmed
        };
        VerificationOutcome {
            status,
            evidence: support,
        }
    }
}

/// Analyzes `reports` and applies the rule validator.
pub fn validate_onset(
    candidate: &OnsetCandidate,
    reports: &[ReportDocument],
    resources: &TextResources,
) -> VerificationOutcome {
    let analyzed: Vec<AnalyzedReport> = reports
        .iter()
        .filter(|r| r.patient_id == candidate.patient_id)
        .map(|r| resources.analyze(r))
        .collect();
    RuleValidator::default().validate(candidate, &analyzed)
}

/// One row of `cohort.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: String,
    pub onset_date: Date,
    pub status: VerificationStatus,
    /// Distinct supporting report ids joined by `;`.
    pub evidence_report_ids: String,
}

impl CohortRow {
    pub fn new(candidate: &OnsetCandidate, outcome: &VerificationOutcome) -> Self {
        let mut ids: Vec<&str> = outcome.evidence.iter().map(|e| e.report_id.as_str()).collect();
        ids.dedup();
        CohortRow {
            patient_id: candidate.patient_id.clone(),
            onset_date: candidate.onset_date,
            status: outcome.status,
            evidence_report_ids: ids.join(";"),
        }
    }
}

/// Confirmed patients and their onset dates.
pub fn confirmed(rows: &[CohortRow]) -> BTreeMap<String, Date> {
    rows.iter()
        .filter(|r| r.status == VerificationStatus::Confirmed)
        .map(|r| (r.patient_id.clone(), r.onset_date))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Demographic, DiagnosisRow, PatientRecord};
    use crate::schema::FeatureSchema;

    fn d(s: &str) -> Date {
        crate::parse_date(s).unwrap()
    }

    fn rec(pid: &str, dx: &[(&str, &str)]) -> PatientRecord {
        let mut r = PatientRecord::new(Demographic {
            patient_id: pid.into(),
            birth_date: d("1950-01-01"),
            sex: Some("M".into()),
        });
        for (date, code) in dx {
            r.diagnoses.push(DiagnosisRow {
                patient_id: pid.into(),
                date: d(date),
                code_system: "ICD10".into(),
                code: code.to_string(),
            });
        }
        r
    }

    fn candidates(recs: Vec<PatientRecord>, start: Option<Date>) -> Vec<OnsetCandidate> {
        let schema = FeatureSchema::default_schema();
        let map = CodeMap::default_for(&schema);
        select_candidates(&StructuredStore::from_records(recs), &map, start)
    }

    #[test]
    fn earliest_af_code_is_onset() {
        let c = candidates(
            vec![
                rec("P1", &[("2019-05-01", "I48.0"), ("2018-01-01", "I10")]),
                rec("P2", &[("2019-03-03", "I48.1"), ("2017-02-02", "I48.1")]),
                rec("P3", &[("2019-03-03", "I10")]),
            ],
            None,
        );
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].onset_date, d("2019-05-01"));
        assert_eq!(c[0].trigger_code, "I48.0");
        assert_eq!(c[1].onset_date, d("2017-02-02"));
    }

    #[test]
    fn onset_before_study_window_excluded() {
        let c = candidates(vec![rec("P1", &[("2014-05-01", "I48.0")])], Some(d("2015-01-01")));
        assert!(c.is_empty());
    }

    fn report(id: &str, date: &str, text: &str) -> ReportDocument {
        ReportDocument::new("P1", id, d(date), text)
    }

    fn check(reports: &[ReportDocument]) -> VerificationOutcome {
        let schema = FeatureSchema::default_schema();
        let res = TextResources::default_for(&schema);
        let cand = OnsetCandidate {
            patient_id: "P1".into(),
            onset_date: d("2019-05-01"),
            trigger_code: "I48.0".into(),
        };
        validate_onset(&cand, reports, &res)
    }

    #[test]
    fn onset_day_report_confirms() {
        let out = check(&[report(
            "R1",
            "2019-05-01",
            "ANTECEDENTES:\nHTA.\nENFERMEDAD ACTUAL:\nECG: fibrilación auricular con RVR.",
        )]);
        assert_eq!(out.status, VerificationStatus::Confirmed);
        assert_eq!(out.evidence[0].report_id, "R1");
    }

    #[test]
    fn earlier_history_mention_rejects() {
        let out = check(&[
            report("R0", "2018-01-01", "ANTECEDENTES PERSONALES:\nFA crónica.\n"),
            report("R1", "2019-05-01", "ENFERMEDAD ACTUAL:\nFA."),
        ]);
        assert_eq!(out.status, VerificationStatus::RejectedPriorHistory);
        assert_eq!(out.evidence[0].report_id, "R0");
    }

    #[test]
    fn no_report_in_window() {
        let out = check(&[report("R1", "2019-05-20", "ENFERMEDAD ACTUAL:\nFA.")]);
        assert_eq!(out.status, VerificationStatus::RejectedNoTextualEvidence);
        let out = check(&[report("R1", "2019-05-08", "ENFERMEDAD ACTUAL:\nFA.")]);
        assert_eq!(out.status, VerificationStatus::Confirmed);
    }

    #[test]
    fn negated_or_history_only_mentions_do_not_confirm() {
        let out = check(&[report("R1", "2019-05-01", "ENFERMEDAD ACTUAL:\nNo se evidencia fibrilación auricular.")]);
        assert_eq!(out.status, VerificationStatus::RejectedNoTextualEvidence);
    }

    #[test]
    fn later_history_mention_is_allowed() {
        let out = check(&[
            report("R1", "2019-05-01", "ENFERMEDAD ACTUAL:\nFA paroxística."),
            report("R2", "2019-09-01", "ANTECEDENTES:\nFA paroxística.\n"),
        ]);
        assert_eq!(out.status, VerificationStatus::Confirmed);
    }

    #[test]
    fn adding_history_mention_never_confirms() {
        let base = vec![report("R1", "2019-05-01", "ENFERMEDAD ACTUAL:\nFA.")];
        let mut more = base.clone();
        more.push(report("R0", "2019-01-01", "ANTECEDENTES:\nFA."));
        assert_eq!(check(&base).status, VerificationStatus::Confirmed);
        assert_eq!(check(&more).status, VerificationStatus::RejectedPriorHistory);
    }
}

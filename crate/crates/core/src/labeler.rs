//! Silver labels from the arrhythmia timeline reconstructed out of the
//! report text.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::ReportDocument;
use crate::report2vector::{AnalyzedReport, SectionKind, TextResources, SINUS_RHYTHM};
use crate::{Date, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Progression,
    NoProgression,
    Excluded,
}

impl Label {
    pub fn code(self) -> i8 {
        match self {
            Label::Progression => 1,
            Label::NoProgression => 0,
            Label::Excluded => -1,
        }
    }

    /// Binary class for metrics; `None` for excluded patients.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Label::Progression => Some(true),
            Label::NoProgression => Some(false),
            Label::Excluded => None,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.code()
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Label::Progression),
            0 => Ok(Label::NoProgression),
            -1 => Ok(Label::Excluded),
            other => Err(format!("invalid label {other}")),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.trim()
            .parse::<i8>()
            .map_err(|e| e.to_string())
            .and_then(Label::try_from)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AfStatus {
    AfEpisode,
    SinusRhythm,
    NoInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedStatus {
    pub date: Date,
    pub status: AfStatus,
    pub source_report_id: String,
}

/// AF status documented by one report. An affirmed AF mention outside past
/// history makes it an episode; otherwise an affirmed sinus-rhythm finding
/// makes it sinus rhythm.
pub fn af_status(report: &AnalyzedReport) -> DatedStatus {
    let status = if report.current_af_mentions().next().is_some() {
        AfStatus::AfEpisode
    } else if report.mentions.iter().any(|m| {
        m.feature_id == SINUS_RHYTHM && m.is_affirmed() && m.section_kind != SectionKind::PastHistory
    }) {
        AfStatus::SinusRhythm
    } else {
        AfStatus::NoInfo
    };
    DatedStatus {
        date: report.date,
        status,
        source_report_id: report.report_id.clone(),
    }
}

pub fn extract_af_status(report: &ReportDocument, resources: &TextResources) -> DatedStatus {
    af_status(&resources.analyze(report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrhythmiaTimeline {
    pub patient_id: String,
    pub onset_date: Date,
    pub events: Vec<DatedStatus>,
}

/// Drops `NoInfo` and pre-onset statuses, sorts by date and keeps one event
/// per day, an AF episode taking precedence over sinus rhythm.
pub fn build_timeline(patient_id: &str, statuses: &[DatedStatus], onset_date: Date) -> ArrhythmiaTimeline {
    let mut events: Vec<DatedStatus> = statuses
        .iter()
        .filter(|s| s.status != AfStatus::NoInfo && s.date >= onset_date)
        .cloned()
        .collect();
    events.sort_by(|a, b| (a.date, a.status, &a.source_report_id).cmp(&(b.date, b.status, &b.source_report_id)));
    events.dedup_by(|later, earlier| later.date == earlier.date);
    ArrhythmiaTimeline {
        patient_id: patient_id.to_string(),
        onset_date,
        events,
    }
}

/// Day offsets after onset, both inclusive, in which a new AF episode
/// counts as progression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgressionWindow {
    pub start_offset_days: i64,
    pub end_offset_days: i64,
}

impl Default for ProgressionWindow {
    fn default() -> Self {
        ProgressionWindow {
            start_offset_days: 30,
            end_offset_days: 730,
        }
    }
}

impl ProgressionWindow {
    pub fn validate(&self) -> Result<()> {
        if 0 < self.start_offset_days && self.start_offset_days < self.end_offset_days {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "progression window needs 0 < start < end, got {}..{}",
                self.start_offset_days, self.end_offset_days
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelDecision {
    pub label: Label,
    /// The event that decided a 1 or 0 label.
    pub deciding_date: Option<Date>,
}

/// 1 for an AF episode inside the window; else 0 for sinus rhythm on or
/// after the window start; else -1.
pub fn assign_label(timeline: &ArrhythmiaTimeline, window: &ProgressionWindow) -> LabelDecision {
    let offset = |e: &DatedStatus| (e.date - timeline.onset_date).num_days();
    if let Some(e) = timeline.events.iter().find(|e| {
        e.status == AfStatus::AfEpisode
            && (window.start_offset_days..=window.end_offset_days).contains(&offset(e))
    }) {
        return LabelDecision {
            label: Label::Progression,
            deciding_date: Some(e.date),
        };
    }
    if let Some(e) = timeline
        .events
        .iter()
        .find(|e| e.status == AfStatus::SinusRhythm && offset(e) >= window.start_offset_days)
    {
        return LabelDecision {
            label: Label::NoProgression,
            deciding_date: Some(e.date),
        };
    }
    LabelDecision {
        label: Label::Excluded,
        deciding_date: None,
    }
}

/// One row of `labels.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub patient_id: String,
    pub onset_date: Date,
    pub label: Label,
    pub first_event_in_window_date: Option<Date>,
}

/// Labels one patient from analyzed reports.
pub fn label_patient(
    patient_id: &str,
    onset_date: Date,
    reports: &[AnalyzedReport],
    window: &ProgressionWindow,
) -> LabelRow {
    let statuses: Vec<DatedStatus> = reports.iter().map(af_status).collect();
    let timeline = build_timeline(patient_id, &statuses, onset_date);
    let decision = assign_label(&timeline, window);
    LabelRow {
        patient_id: patient_id.to_string(),
        onset_date,
        label: decision.label,
        first_event_in_window_date: decision.deciding_date,
    }
}

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text::normalize;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SectionKind {
    PastHistory,
    CurrentEpisode,
    Exam,
    Evolution,
    Treatment,
    Diagnosis,
    Unknown,
}

impl FromStr for SectionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "PastHistory" => SectionKind::PastHistory,
            "CurrentEpisode" => SectionKind::CurrentEpisode,
            "Exam" => SectionKind::Exam,
            "Evolution" => SectionKind::Evolution,
            "Treatment" => SectionKind::Treatment,
            "Diagnosis" => SectionKind::Diagnosis,
            "Unknown" => SectionKind::Unknown,
            other => return Err(format!("unknown section kind `{other}`")),
        })
    }
}

/// A contiguous block of report text. `start..end` are byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub start: usize,
    pub end: usize,
    pub header_text: String,
}

#[derive(Debug, Clone)]
struct Alias {
    text: String,
    prefix: bool,
    kind: SectionKind,
}

/// Header alias table, matched on normalized header lines.
#[derive(Debug, Clone)]
pub struct HeaderTable {
    aliases: Vec<Alias>,
}

impl Default for HeaderTable {
    fn default() -> Self {
        Self::parse(crate::resources::HEADERS).expect("shipped header table is valid")
    }
}

impl HeaderTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `kind<TAB>alias` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut aliases = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, alias) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("headers", i + 1, "expected kind<TAB>alias"))?;
            let kind = kind.parse().map_err(|e| Error::parse("headers", i + 1, e))?;
            let alias = normalize(alias.trim());
            let (text, prefix) = match alias.strip_suffix('*') {
                Some(stem) => (stem.trim_end().to_string(), true),
                None => (alias, false),
            };
            aliases.push(Alias { text, prefix, kind });
        }
        Ok(HeaderTable { aliases })
    }

    fn lookup(&self, candidate: &str) -> Option<SectionKind> {
        let norm = normalize(candidate.trim());
        let norm = norm.trim_end_matches(':').trim_end();
        if norm.is_empty() {
            return None;
        }
        self.aliases
            .iter()
            .find(|a| if a.prefix { norm.starts_with(&a.text) } else { norm == a.text })
            .map(|a| a.kind)
    }

    /// Classifies a line as a header. Either the whole line is an alias
    /// (trailing colon optional), or the text before its first colon is.
    pub fn classify(&self, line: &str) -> Option<(SectionKind, String)> {
        let trimmed = line.trim();
        if let Some(kind) = self.lookup(trimmed) {
            return Some((kind, trimmed.to_string()));
        }
        let (head, _) = trimmed.split_once(':')?;
        self.lookup(head).map(|kind| (kind, format!("{}:", head.trim())))
    }
}

/// Partitions `text` into sections at recognized header lines. Text before
/// the first header is an `Unknown` section; without any header the whole
/// text is one `Unknown` section.
pub fn segment_sections(text: &str, headers: &HeaderTable) -> Vec<Section> {
    let mut starts: Vec<(usize, SectionKind, String)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((kind, header)) = headers.classify(line) {
            starts.push((offset, kind, header));
        }
        offset += line.len();
    }
    let mut sections = Vec::with_capacity(starts.len() + 1);
    let first = starts.first().map_or(text.len(), |s| s.0);
    if first > 0 || starts.is_empty() {
        sections.push(Section {
            kind: SectionKind::Unknown,
            start: 0,
            end: first,
            header_text: String::new(),
        });
    }
    for (i, (start, kind, header)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(text.len(), |s| s.0);
        sections.push(Section {
            kind: *kind,
            start: *start,
            end,
            header_text: header.clone(),
        });
    }
    sections
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(text: &str) -> Vec<SectionKind> {
        segment_sections(text, &HeaderTable::default())
            .iter()
            .map(|s| s.kind)
            .collect()
    }

    #[test]
    fn history_then_current_episode() {
        let text = "ANTECEDENTES PERSONALES:\nHTA.\nENFERMEDAD ACTUAL:\nPalpitaciones.\n";
        assert_eq!(kinds(text), [SectionKind::PastHistory, SectionKind::CurrentEpisode]);
        let secs = segment_sections(text, &HeaderTable::default());
        assert_eq!(secs[0].header_text, "ANTECEDENTES PERSONALES:");
        assert_eq!(&text[secs[1].start..secs[1].end], "ENFERMEDAD ACTUAL:\nPalpitaciones.\n");
    }

    #[test]
    fn no_header_is_single_unknown() {
        let text = "Paciente estable sin incidencias.";
        let secs = segment_sections(text, &HeaderTable::default());
        assert_eq!(secs.len(), 1);
        assert_eq!(secs[0].kind, SectionKind::Unknown);
        assert_eq!((secs[0].start, secs[0].end), (0, text.len()));
    }

    #[test]
    fn lowercase_accented_header() {
        assert_eq!(kinds("evolución:\nestable"), [SectionKind::Evolution]);
        assert_eq!(kinds("Evolucion\nestable"), [SectionKind::Evolution]);
    }

    #[test]
    fn preamble_and_inline_headers() {
        let text = "INFORME DE ALTA\nTratamiento: bisoprolol 2,5 mg.\nJUICIO CLÍNICO:\nFA.";
        assert_eq!(
            kinds(text),
            [SectionKind::Unknown, SectionKind::Treatment, SectionKind::Diagnosis]
        );
    }

    #[test]
    fn wildcard_alias_matches_continuations() {
        assert_eq!(kinds("EXPLORACIONES COMPLEMENTARIAS:\nECG"), [SectionKind::Exam]);
        assert_eq!(kinds("Antecedentes familiares\nnada"), [SectionKind::PastHistory]);
    }

    proptest! {
        #[test]
        fn sections_partition_text(lines in proptest::collection::vec(
            prop_oneof![
                Just("ANTECEDENTES:".to_string()),
                Just("Evolución".to_string()),
                Just("TRATAMIENTO: nada".to_string()),
                "[a-zA-Záéíóú .:,0-9]{0,30}",
            ], 1..12)) {
            let text = lines.join("\n");
            let secs = segment_sections(&text, &HeaderTable::default());
            prop_assert!(!secs.is_empty());
            prop_assert_eq!(secs[0].start, 0);
            prop_assert_eq!(secs.last().unwrap().end, text.len());
            for w in secs.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert!(w[0].start < w[0].end || w[0].start == 0);
            }
            let total: usize = secs.iter().map(|s| s.end - s.start).sum();
            prop_assert_eq!(total, text.len());
        }
    }
}

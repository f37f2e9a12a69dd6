use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sections::{Section, SectionKind};
use crate::schema::{FeatureSchema, ValueKind};
use crate::text::{phrase_tokens, tokenize, Token};
use crate::{Error, Result};

/// Reserved lexicon concept for sinus-rhythm / non-AF ECG findings.
pub const SINUS_RHYTHM: &str = "sinus_rhythm";

/// Feature whose mentions count as atrial fibrillation mentions.
pub const AF_FEATURE: &str = "af_type";

/// Maximum number of tokens between a negation trigger and its mention.
pub const NEGATION_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub feature_id: String,
    /// Category value for categorical features, e.g. `persistent`.
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Affirmed,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub feature_id: String,
    pub value: Option<String>,
    pub surface: String,
    pub span: (usize, usize),
    pub polarity: Polarity,
    pub section_kind: SectionKind,
}

impl EntityMention {
    pub fn is_af(&self) -> bool {
        self.feature_id == AF_FEATURE
    }

    pub fn is_affirmed(&self) -> bool {
        self.polarity == Polarity::Affirmed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TriggerKind {
    Pre,
    Post,
    Terminator,
}

#[derive(Debug, Clone)]
struct Entry<T> {
    tokens: Vec<String>,
    payload: T,
}

/// Longest-match phrase index keyed by first token.
#[derive(Debug, Clone)]
struct PhraseIndex<T> {
    by_first: HashMap<String, Vec<Entry<T>>>,
}

impl<T: Clone> PhraseIndex<T> {
    fn new() -> Self {
        PhraseIndex { by_first: HashMap::new() }
    }

    fn insert(&mut self, tokens: Vec<String>, payload: T) {
        let bucket = self.by_first.entry(tokens[0].clone()).or_default();
        bucket.push(Entry { tokens, payload });
        bucket.sort_by_key(|e| std::cmp::Reverse(e.tokens.len()));
    }

    /// Longest entry matching at `tokens[i..]`, staying within one sentence.
    fn longest_at(&self, tokens: &[Token], i: usize) -> Option<(usize, &T)> {
        let bucket = self.by_first.get(&tokens[i].norm)?;
        bucket.iter().find_map(|e| {
            let n = e.tokens.len();
            let window = tokens.get(i..i + n)?;
            let same_sentence = window.iter().all(|t| t.sentence == tokens[i].sentence);
            let eq = window.iter().zip(&e.tokens).all(|(t, w)| &t.norm == w);
            (same_sentence && eq).then_some((n, &e.payload))
        })
    }
}

/// Surface forms per concept plus negation triggers.
#[derive(Debug, Clone)]
pub struct Lexicon {
    concepts: PhraseIndex<Concept>,
    triggers: PhraseIndex<TriggerKind>,
    surfaces: Vec<(Concept, String)>,
    trigger_count: usize,
}

impl Lexicon {
    pub fn default_for(schema: &FeatureSchema) -> Self {
        Self::parse(crate::resources::LEXICON, schema).expect("shipped lexicon is valid")
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, schema)
    }

    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let mut lex = Lexicon {
            concepts: PhraseIndex::new(),
            triggers: PhraseIndex::new(),
            surfaces: Vec::new(),
            trigger_count: 0,
        };
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, surface) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("lexicon", line_no, "expected concept<TAB>surface"))?;
            let surface = surface.trim();
            let tokens = phrase_tokens(surface);
            if tokens.is_empty() {
                return Err(Error::parse("lexicon", line_no, "empty surface form"));
            }
            let trigger = match head {
                "NEG-PRE" => Some(TriggerKind::Pre),
                "NEG-POST" => Some(TriggerKind::Post),
                "TERM" => Some(TriggerKind::Terminator),
                _ => None,
            };
            if let Some(kind) = trigger {
                if kind != TriggerKind::Terminator {
                    lex.trigger_count += 1;
                }
                lex.triggers.insert(tokens, kind);
                continue;
            }
            let concept = parse_concept(head, schema).map_err(|m| Error::parse("lexicon", line_no, m))?;
            lex.surfaces.push((concept.clone(), surface.to_string()));
            lex.concepts.insert(tokens, concept);
        }
        if lex.trigger_count == 0 {
            return Err(Error::parse("lexicon", 0, "no negation triggers"));
        }
        Ok(lex)
    }

    /// First listed surface form for a concept.
    pub fn preferred_surface(&self, feature_id: &str, value: Option<&str>) -> Option<&str> {
        self.surfaces
            .iter()
            .find(|(c, _)| c.feature_id == feature_id && c.value.as_deref() == value)
            .map(|(_, s)| s.as_str())
    }

    /// Features with at least one surface form.
    pub fn has_surface(&self, feature_id: &str) -> bool {
        self.surfaces.iter().any(|(c, _)| c.feature_id == feature_id)
    }
}

fn parse_concept(head: &str, schema: &FeatureSchema) -> Result<Concept, String> {
    let (id, value) = match head.split_once('=') {
        Some((id, v)) => (id.trim(), Some(v.trim().to_string())),
        None => (head.trim(), None),
    };
    if id == SINUS_RHYTHM && value.is_none() {
        return Ok(Concept { feature_id: id.to_string(), value });
    }
    let def = schema
        .get(id)
        .ok_or_else(|| format!("feature `{id}` not in schema"))?;
    match (&value, def.value_kind) {
        (None, ValueKind::Boolean3State) => {}
        (None, ValueKind::Categorical) if id == AF_FEATURE => {}
        (Some(v), ValueKind::Categorical) => {
            let allowed = def.allowed_values.as_deref().unwrap_or_default();
            if !allowed.contains(v) {
                return Err(format!("value `{v}` not allowed for `{id}`"));
            }
        }
        _ => return Err(format!("feature `{id}` cannot be recognized from text")),
    }
    Ok(Concept { feature_id: id.to_string(), value })
}

/// Finds lexicon mentions in one section and assigns polarity.
///
/// Mentions are matched greedily left to right, longest form first. A
/// mention is `Negated` when a forward trigger ends at most
/// [`NEGATION_WINDOW`] tokens before it (or a backward trigger starts at
/// most that many tokens after it) in the same sentence, with no
/// terminator in between.
pub fn detect_entities(text: &str, section: &Section, lexicon: &Lexicon) -> Vec<EntityMention> {
    let tokens = tokenize(text, section.start..section.end);
    let mut mentions: Vec<(usize, usize, &Concept)> = Vec::new();
    let mut covered = vec![false; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        match lexicon.concepts.longest_at(&tokens, i) {
            Some((n, concept)) => {
                mentions.push((i, i + n - 1, concept));
                covered[i..i + n].iter_mut().for_each(|c| *c = true);
                i += n;
            }
            None => i += 1,
        }
    }

    let mut triggers: Vec<(usize, usize, TriggerKind)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if covered[i] {
            i += 1;
            continue;
        }
        match lexicon.triggers.longest_at(&tokens, i) {
            Some((n, kind)) if !covered[i..i + n].iter().any(|c| *c) => {
                triggers.push((i, i + n - 1, *kind));
                i += n;
            }
            _ => i += 1,
        }
    }
    let terminated = |from: usize, to: usize| {
        triggers
            .iter()
            .any(|&(s, _, k)| k == TriggerKind::Terminator && s > from && s < to)
    };

    mentions
        .into_iter()
        .map(|(first, last, concept)| {
            let sentence = tokens[first].sentence;
            let negated = triggers.iter().any(|&(ts, te, kind)| {
                if tokens[ts].sentence != sentence {
                    return false;
                }
                match kind {
                    TriggerKind::Pre => te < first && first - te <= NEGATION_WINDOW && !terminated(te, first),
                    TriggerKind::Post => ts > last && ts - last <= NEGATION_WINDOW && !terminated(last, ts),
                    TriggerKind::Terminator => false,
                }
            });
            let (start, end) = (tokens[first].start, tokens[last].end);
            EntityMention {
                feature_id: concept.feature_id.clone(),
                value: concept.value.clone(),
                surface: text[start..end].to_string(),
                span: (start, end),
                polarity: if negated { Polarity::Negated } else { Polarity::Affirmed },
                section_kind: section.kind,
            }
        })
        .collect()
}

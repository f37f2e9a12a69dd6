//! Text normalization and tokenization shared by the section splitter and
//! the entity matcher.

use std::ops::Range;

/// Lower-cases a character and strips Spanish/Latin diacritics, mapping
/// exactly one input char to one output char.
pub fn fold_char(c: char) -> char {
    let lower = c.to_lowercase().next().unwrap_or(c);
    match lower {
        'á' | 'à' | 'ä' | 'â' | 'ã' => 'a',
        'é' | 'è' | 'ë' | 'ê' => 'e',
        'í' | 'ì' | 'ï' | 'î' => 'i',
        'ó' | 'ò' | 'ö' | 'ô' | 'õ' => 'o',
        'ú' | 'ù' | 'ü' | 'û' => 'u',
        'ñ' => 'n',
        'ç' => 'c',
        other => other,
    }
}

pub fn normalize(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

/// A word token with byte offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub norm: String,
    pub start: usize,
    pub end: usize,
    /// Sentence ordinal within the tokenized range.
    pub sentence: usize,
}

fn is_sentence_break(prev: Option<char>, c: char, next: Option<char>) -> bool {
    match c {
        '\n' | ';' | '!' | '?' => true,
        '.' => !(prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit())),
        _ => false,
    }
}

/// Splits `text[range]` into alphanumeric tokens, numbering sentences.
/// A period between two digits is a decimal point, not a sentence end.
pub fn tokenize(text: &str, range: Range<usize>) -> Vec<Token> {
    let slice = &text[range.clone()];
    let chars: Vec<(usize, char)> = slice.char_indices().collect();
    let mut tokens = Vec::new();
    let mut sentence = 0;
    let mut current: Option<(usize, String)> = None;
    for (k, &(off, c)) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            match current.as_mut() {
                Some((_, s)) => s.push(fold_char(c)),
                None => current = Some((off, fold_char(c).to_string())),
            }
            continue;
        }
        if let Some((start, norm)) = current.take() {
            tokens.push(Token {
                norm,
                start: range.start + start,
                end: range.start + off,
                sentence,
            });
        }
        let prev = k.checked_sub(1).map(|j| chars[j].1);
        let next = chars.get(k + 1).map(|x| x.1);
        if is_sentence_break(prev, c, next) {
            sentence += 1;
        }
    }
    if let Some((start, norm)) = current {
        tokens.push(Token {
            norm,
            start: range.start + start,
            end: range.end,
            sentence,
        });
    }
    tokens
}

/// Normalized token strings of a phrase, used for lexicon entries.
pub fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase, 0..phrase.len())
        .into_iter()
        .map(|t| t.norm)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_accents_and_case() {
        assert_eq!(normalize("EVOLUCIÓN Fibrilación Cardíaca"), "evolucion fibrilacion cardiaca");
        assert_eq!(normalize("Ñ").chars().count(), 1);
    }

    #[test]
    fn tokens_carry_original_offsets() {
        let text = "Sin fibrilación. Albúmina 3.5 g/dL";
        let toks = tokenize(text, 0..text.len());
        let words: Vec<_> = toks.iter().map(|t| t.norm.as_str()).collect();
        assert_eq!(words, ["sin", "fibrilacion", "albumina", "3", "5", "g", "dl"]);
        assert_eq!(&text[toks[1].start..toks[1].end], "fibrilación");
        assert_eq!(toks[1].sentence, 0);
        assert_eq!(toks[2].sentence, 1);
        // decimal point does not end the sentence
        assert_eq!(toks[4].sentence, 1);
    }

    #[test]
    fn newline_and_semicolon_break_sentences() {
        let text = "a\nb; c. d";
        let s: Vec<_> = tokenize(text, 0..text.len()).iter().map(|t| t.sentence).collect();
        assert_eq!(s, [0, 1, 2, 3]);
    }
}

//! Rule-based sentence segmentation.
//!
//! Text is whitespace-normalized first, so a boundary can only fall between
//! two whitespace-separated tokens. A boundary follows a token whose last
//! non-closing character is `.`, `?` or `!` when the next token opens with an
//! uppercase letter or a quote, unless the token is a known abbreviation or a
//! single-letter initial.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationConfig {
    /// Stored lowercased; matching is case-insensitive.
    abbreviations: HashSet<String>,
    min_sentence_chars: usize,
}

impl SegmentationConfig {
    pub fn new<I, S>(abbreviations: I, min_sentence_chars: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if min_sentence_chars < 1 {
            return Err(Error::Contract("min_sentence_chars must be at least 1".into()));
        }
        let mut set = HashSet::new();
        for abbr in abbreviations {
            let abbr = abbr.as_ref().trim();
            if !abbr.ends_with('.') {
                return Err(Error::Contract(format!(
                    "abbreviation {abbr:?} does not end with a period"
                )));
            }
            set.insert(abbr.to_lowercase());
        }
        Ok(Self {
            abbreviations: set,
            min_sentence_chars,
        })
    }

    /// Reads one abbreviation per line; blank lines and `#` comments are skipped.
    pub fn from_abbreviation_file(path: &Path, min_sentence_chars: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(parse_list(&text), min_sentence_chars)
    }

    pub fn min_sentence_chars(&self) -> usize {
        self.min_sentence_chars
    }

    pub fn is_abbreviation(&self, token: &str) -> bool {
        self.abbreviations.contains(&token.to_lowercase())
    }

    /// Sorted abbreviation list, used for fingerprinting run configurations.
    pub fn abbreviations(&self) -> Vec<String> {
        let mut v: Vec<String> = self.abbreviations.iter().cloned().collect();
        v.sort();
        v
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self::new(parse_list(DEFAULT_ABBREVIATIONS), 2).expect("shipped abbreviation list is valid")
    }
}

fn parse_list(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn segment(text: &str, cfg: &SegmentationConfig) -> Result<Vec<String>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::EmptyInput("text has no non-whitespace content".into()));
    }

    let mut spans: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        current.push(tok);
        let next = tokens.get(i + 1);
        if next.is_some_and(|n| ends_sentence(tok, n, cfg)) {
            spans.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        spans.push(current);
    }

    let sentences: Vec<String> = spans.into_iter().map(|s| s.join(" ")).collect();
    Ok(merge_short(sentences, cfg.min_sentence_chars))
}

fn ends_sentence(token: &str, next: &str, cfg: &SegmentationConfig) -> bool {
    let core = token.trim_end_matches(CLOSERS);
    let Some(last) = core.chars().last() else {
        return false;
    };
    if !matches!(last, '.' | '?' | '!') {
        return false;
    }
    let opens_sentence = next
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}'));
    if !opens_sentence {
        return false;
    }
    if last == '.' {
        let word = core.trim_start_matches(OPENERS);
        if cfg.is_abbreviation(word) || is_initial(word) {
            return false;
        }
    }
    true
}

fn is_initial(word: &str) -> bool {
    let mut chars = word.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

fn merge_short(sentences: Vec<String>, min_chars: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(sentences.len());
    let mut pending: Option<String> = None;
    for s in sentences {
        let s = match pending.take() {
            Some(p) => format!("{p} {s}"),
            None => s,
        };
        if s.chars().count() >= min_chars {
            out.push(s);
        } else if let Some(prev) = out.last_mut() {
            prev.push(' ');
            prev.push_str(&s);
        } else {
            // leading fragment: attach to whatever follows
            pending = Some(s);
        }
    }
    if let Some(p) = pending {
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(text: &str) -> Vec<String> {
        segment(text, &SegmentationConfig::default()).unwrap()
    }

    #[test]
    fn two_plain_sentences() {
        assert_eq!(seg("A claim. Another claim."), vec!["A claim.", "Another claim."]);
    }

    #[test]
    fn abbreviation_is_not_a_boundary() {
        assert_eq!(
            seg("Dr. Smith agreed. It worked."),
            vec!["Dr. Smith agreed.", "It worked."]
        );
        assert_eq!(
            seg("Drugs, e.g. Aspirin, help. Fig. A shows it."),
            vec!["Drugs, e.g. Aspirin, help.", "Fig. A shows it."]
        );
    }

    #[test]
    fn initials_and_decimals() {
        assert_eq!(
            seg("J. R. Smith wrote 3.5 pages. Then he left!"),
            vec!["J. R. Smith wrote 3.5 pages.", "Then he left!"]
        );
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(
            seg("It costs 5 p. per unit. Yes."),
            vec!["It costs 5 p. per unit.", "Yes."]
        );
        assert_eq!(seg("Wait... and then. Ok"), vec!["Wait... and then.", "Ok"]);
    }

    #[test]
    fn quotes_open_and_close_sentences() {
        assert_eq!(
            seg("He said \"stop.\" \"Why?\" she asked. Done."),
            vec!["He said \"stop.\"", "\"Why?\" she asked.", "Done."]
        );
    }

    #[test]
    fn short_fragments_merge_backwards() {
        let cfg = SegmentationConfig::new(["Dr."], 5).unwrap();
        assert_eq!(
            segment("First one. A. Next one.", &cfg).unwrap(),
            // no boundary after the initial "A."
            vec!["First one.", "A. Next one."]
        );
        assert_eq!(segment("Ok! Fine then. X!", &cfg).unwrap(), vec!["Ok! Fine then. X!"]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            segment("  \n\t ", &SegmentationConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SegmentationConfig::new(["Dr"], 2).is_err());
        assert!(SegmentationConfig::new(["Dr."], 0).is_err());
        let cfg = SegmentationConfig::default();
        assert!(cfg.is_abbreviation("dr."));
        assert!(cfg.abbreviations().len() >= 50);
    }

    proptest! {
        #[test]
        fn segmentation_is_lossless(words in proptest::collection::vec(
            prop_oneof![
                "[A-Za-z]{1,8}",
                "[A-Z][a-z]{0,6}[.?!]",
                Just("Dr.".to_string()),
                Just("e.g.".to_string()),
                Just("\"Yes.\"".to_string()),
                Just(".".to_string()),
            ], 1..40),
            gaps in proptest::collection::vec("[ \t\n]{1,3}", 40),
        ) {
            let mut text = String::from(" ");
            for (w, g) in words.iter().zip(gaps.iter()) {
                text.push_str(w);
                text.push_str(g);
            }
            let cfg = SegmentationConfig::default();
            let out = segment(&text, &cfg).unwrap();
            prop_assert_eq!(out.join(" "), normalize_whitespace(&text));
            prop_assert!(out.iter().all(|s| !s.is_empty()));
            prop_assert_eq!(out.clone(), segment(&text, &cfg).unwrap());
        }
    }
}

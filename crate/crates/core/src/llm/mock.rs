//! Deterministic offline backend. Every reply is a pure function of the
//! prompt:
//!
//! * summarize: first, middle and last document sentences, joined;
//! * decompose: split on sentence boundaries, then on `", "` and `" and "`;
//!   a lowercase clause after `" and "` borrows the sentence's first word;
//! * entail: true iff at least 60% of the fact's distinct content words
//!   (lowercased, stopwords removed) occur in the sentence.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde_json::json;

use super::{LlmBackend, LlmRequest, Task};
use crate::error::{Error, Result};
use crate::prompts::PromptSet;
use crate::segmenter::{self, SegmentationConfig};

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Distinct lowercased non-stopword tokens, in first-occurrence order.
pub fn content_words(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    words(text)
        .filter(|w| !stopwords().contains(w.as_str()))
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

pub fn entails(sentence: &str, fact: &str) -> bool {
    let needed = content_words(fact);
    if needed.is_empty() {
        return false;
    }
    let have: HashSet<String> = words(sentence).collect();
    let hits = needed.iter().filter(|w| have.contains(*w)).count();
    hits * 5 >= needed.len() * 3
}

pub fn summarize(document: &str, cfg: &SegmentationConfig) -> Result<String> {
    let sentences = segmenter::segment(document, cfg)?;
    let n = sentences.len();
    let mut picks = vec![0, n / 2, n - 1];
    picks.dedup();
    Ok(picks
        .iter()
        .map(|&i| sentences[i].as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

pub fn decompose(text: &str, cfg: &SegmentationConfig) -> Result<Vec<String>> {
    let mut facts = Vec::new();
    for sentence in segmenter::segment(text, cfg)? {
        facts.extend(split_clauses(&sentence));
    }
    Ok(facts)
}

fn split_clauses(sentence: &str) -> Vec<String> {
    let body = sentence.trim_end_matches(['.', '?', '!', ',', ';', ' ']);
    let terminal = sentence[body.len()..]
        .chars()
        .find(|c| matches!(c, '.' | '?' | '!'))
        .unwrap_or('.');

    // (clause, introduced by a bare " and ")
    let mut parts: Vec<(&str, bool)> = Vec::new();
    let mut rest = body;
    let mut after_and = false;
    loop {
        let next = [(", and ", false), (", ", false), (" and ", true)]
            .into_iter()
            .filter_map(|(d, is_and)| rest.find(d).map(|pos| (pos, d, is_and)))
            .min_by_key(|(pos, d, _)| (*pos, std::cmp::Reverse(d.len())));
        match next {
            Some((pos, delim, is_and)) => {
                parts.push((&rest[..pos], after_and));
                rest = &rest[pos + delim.len()..];
                after_and = is_and;
            }
            None => {
                parts.push((rest, after_and));
                break;
            }
        }
    }

    let subject = body
        .split_whitespace()
        .next()
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase));

    parts
        .into_iter()
        .map(|(p, after_and)| (p.trim(), after_and))
        .filter(|(p, _)| !p.is_empty())
        .map(|(p, after_and)| {
            let starts_lower = p.chars().next().is_some_and(char::is_lowercase);
            let clause = match subject {
                Some(s) if after_and && starts_lower => format!("{s} {p}"),
                _ => capitalize(p),
            };
            format!("{clause}{terminal}")
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    prompts: PromptSet,
    segmentation: SegmentationConfig,
}

impl MockBackend {
    /// `prompts` must be the set used to build requests; the mock recovers
    /// the slot values by matching against these templates.
    pub fn new(prompts: PromptSet, segmentation: SegmentationConfig) -> Self {
        Self { prompts, segmentation }
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, req: &LlmRequest) -> Result<String> {
        let slots = self
            .prompts
            .template(req.task)
            .extract(&req.prompt)
            .ok_or_else(|| Error::Input(format!("mock backend cannot read {} prompt", req.task.as_str())))?;
        let body = match req.task {
            Task::Summarize => json!({ "summary": summarize(slots[0], &self.segmentation)? }),
            Task::Decompose => json!({ "facts": decompose(slots[0], &self.segmentation)? }),
            Task::Entail => json!({ "entails": entails(slots[0], slots[1]) }),
        };
        Ok(body.to_string())
    }
}

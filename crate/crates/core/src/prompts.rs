//! Prompt templates with `[placeholder]` slots.

use std::path::Path;

use crate::error::{Error, Result};
use crate::llm::Task;

const SUMMARIZE: &str = include_str!("../prompts/summarize.txt");
const DECOMPOSE: &str = include_str!("../prompts/decompose.txt");
const ENTAIL: &str = include_str!("../prompts/entail.txt");

/// Appended to a prompt when the first reply could not be parsed.
pub const FORMAT_REMINDER: &str = "\n\nYour previous reply was not a valid JSON object in the requested format. Respond **only** with the JSON object.";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(&'static str),
}

/// A parsed template. Rendering substitutes values verbatim in one pass, so
/// values that happen to contain placeholder text are left alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    raw: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(raw: &str, slots: &[&'static str]) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut rest = raw;
        loop {
            let next = slots
                .iter()
                .filter_map(|s| rest.find(&format!("[{s}]")).map(|pos| (pos, *s)))
                .min_by_key(|(pos, _)| *pos);
            match next {
                Some((pos, slot)) => {
                    if pos > 0 {
                        pieces.push(Piece::Literal(rest[..pos].to_string()));
                    }
                    pieces.push(Piece::Slot(slot));
                    rest = &rest[pos + slot.len() + 2..];
                }
                None => {
                    if !rest.is_empty() {
                        pieces.push(Piece::Literal(rest.to_string()));
                    }
                    break;
                }
            }
        }
        for slot in slots {
            let count = pieces.iter().filter(|p| **p == Piece::Slot(slot)).count();
            if count != 1 {
                return Err(Error::Config(format!(
                    "template must contain [{slot}] exactly once (found {count})"
                )));
            }
        }
        Ok(Self {
            raw: raw.to_string(),
            pieces,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.raw.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Literal(l) => out.push_str(l),
                Piece::Slot(s) => {
                    let v = values.iter().find(|(k, _)| k == s).map(|(_, v)| *v).unwrap_or("");
                    out.push_str(v);
                }
            }
        }
        out
    }

    /// Inverse of [`render`](Self::render): recovers slot values, in template
    /// order, from a prompt built from this template. A trailing
    /// [`FORMAT_REMINDER`] is ignored.
    pub fn extract<'p>(&self, prompt: &'p str) -> Option<Vec<&'p str>> {
        let mut rest = prompt.strip_suffix(FORMAT_REMINDER).unwrap_or(prompt);
        let mut values = Vec::new();
        let mut pending_slot = false;
        for piece in &self.pieces {
            match piece {
                Piece::Literal(l) => {
                    if pending_slot {
                        let pos = rest.find(l.as_str())?;
                        values.push(&rest[..pos]);
                        rest = &rest[pos + l.len()..];
                        pending_slot = false;
                    } else {
                        rest = rest.strip_prefix(l.as_str())?;
                    }
                }
                Piece::Slot(_) => pending_slot = true,
            }
        }
        if pending_slot {
            values.push(rest);
        } else if !rest.is_empty() {
            return None;
        }
        Some(values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub summarize: Template,
    pub decompose: Template,
    pub entail: Template,
}

impl PromptSet {
    /// Loads `summarize.txt`, `decompose.txt` and `entail.txt` from `dir`,
    /// falling back to the shipped template for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let load = |name: &str, default: &str| -> Result<String> {
            let path = dir.join(name);
            if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
            } else {
                Ok(default.to_string())
            }
        };
        Self::from_sources(
            &load("summarize.txt", SUMMARIZE)?,
            &load("decompose.txt", DECOMPOSE)?,
            &load("entail.txt", ENTAIL)?,
        )
    }

    pub fn from_sources(summarize: &str, decompose: &str, entail: &str) -> Result<Self> {
        Ok(Self {
            summarize: Template::parse(summarize, &["document"])?,
            decompose: Template::parse(decompose, &["summary"])?,
            entail: Template::parse(entail, &["sentence", "fact"])?,
        })
    }

    pub fn template(&self, task: Task) -> &Template {
        match task {
            Task::Summarize => &self.summarize,
            Task::Decompose => &self.decompose,
            Task::Entail => &self.entail,
        }
    }

    pub fn summarize_prompt(&self, document: &str) -> String {
        self.summarize.render(&[("document", document)])
    }

    pub fn decompose_prompt(&self, sentence: &str) -> String {
        self.decompose.render(&[("summary", sentence)])
    }

    pub fn entail_prompt(&self, sentence: &str, fact: &str) -> String {
        self.entail.render(&[("sentence", sentence), ("fact", fact)])
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_sources(SUMMARIZE, DECOMPOSE, ENTAIL).expect("shipped templates are valid")
    }
}

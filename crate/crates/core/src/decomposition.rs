//! Per-document summarization and per-sentence atomic-fact decomposition.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::llm::{LlmClient, Payload, Task};
use crate::prompts::PromptSet;
use crate::segmenter::{self, SegmentationConfig};

pub const MIN_SUMMARY_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<String>,
}

impl Summary {
    pub fn from_text(doc_id: impl Into<String>, text: &str, cfg: &SegmentationConfig) -> Result<Self> {
        let doc_id = doc_id.into();
        let sentences = segmenter::segment(text, cfg).map_err(|e| e.in_document(&doc_id))?;
        Ok(Self {
            doc_id,
            text: text.trim().to_string(),
            sentences,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub id: usize,
    pub text: String,
    pub source_summary_sentence: usize,
}

/// Soft-constraint breach recorded alongside an accepted summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractWarning {
    pub doc_id: String,
    pub message: String,
}

pub trait FactDecomposer: Sync {
    fn decompose(&self, summary: &Summary) -> Result<Vec<AtomicFact>>;
}

/// LLM-backed summarizer and decomposer.
pub struct Decomposer<'a> {
    client: &'a LlmClient,
    prompts: &'a PromptSet,
    segmentation: &'a SegmentationConfig,
}

impl<'a> Decomposer<'a> {
    pub fn new(client: &'a LlmClient, prompts: &'a PromptSet, segmentation: &'a SegmentationConfig) -> Self {
        Self {
            client,
            prompts,
            segmentation,
        }
    }

    pub fn summarize(&self, doc: &Document) -> Result<(Summary, Option<ContractWarning>)> {
        if !doc.is_segmented() {
            return Err(Error::Precondition(format!("document {} is not segmented", doc.id)));
        }
        let prompt = self.prompts.summarize_prompt(&doc.text);
        let resp = self
            .client
            .complete(Task::Summarize, &prompt)
            .map_err(|e| e.in_document(&doc.id))?;
        let Payload::Summary(text) = resp.parsed else {
            unreachable!("summarize task yields a summary payload");
        };
        let summary = Summary::from_text(doc.id.clone(), &text, self.segmentation)?;
        let warning = (summary.sentences.len() < MIN_SUMMARY_SENTENCES).then(|| {
            let w = ContractWarning {
                doc_id: doc.id.clone(),
                message: format!(
                    "summary has {} sentence(s), expected at least {MIN_SUMMARY_SENTENCES}",
                    summary.sentences.len()
                ),
            };
            log::warn!("document {}: {}", w.doc_id, w.message);
            w
        });
        Ok((summary, warning))
    }
}

impl FactDecomposer for Decomposer<'_> {
    /// One request per summary sentence; facts keep sentence order and
    /// case-insensitive duplicates are dropped (first occurrence wins).
    fn decompose(&self, summary: &Summary) -> Result<Vec<AtomicFact>> {
        if summary.sentences.is_empty() {
            return Err(Error::Precondition(format!(
                "summary of {} has no sentences",
                summary.doc_id
            )));
        }
        let mut seen = HashSet::new();
        let mut facts = Vec::new();
        for (i, sentence) in summary.sentences.iter().enumerate() {
            let resp = self
                .client
                .complete(Task::Decompose, &self.prompts.decompose_prompt(sentence))
                .map_err(|e| Error::SummarySentence {
                    doc_id: summary.doc_id.clone(),
                    sentence: i,
                    source: Box::new(e),
                })?;
            let Payload::Facts(items) = resp.parsed else {
                unreachable!("decompose task yields a fact list");
            };
            for text in items {
                if seen.insert(text.to_lowercase()) {
                    facts.push(AtomicFact {
                        id: facts.len(),
                        text,
                        source_summary_sentence: i,
                    });
                }
            }
        }
        Ok(facts)
    }
}

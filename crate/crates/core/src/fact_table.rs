//! Sentence–fact entailment tables: rows are document sentences, columns are
//! atomic facts, cells are single-sentence entailment verdicts.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::decomposition::AtomicFact;
use crate::error::{Error, Result};
use crate::evaluation;
use crate::llm::{mock, LlmClient, Payload, Task};
use crate::par::{self, Execution};
use crate::prompts::PromptSet;

/// Judges whether one sentence on its own supports one fact.
pub trait EntailmentScorer: Sync {
    fn scorer_id(&self) -> String;
    fn entails(&self, sentence: &str, fact: &str) -> Result<bool>;
}

/// The mock backend's content-word overlap rule, usable without an LLM.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl EntailmentScorer for LexicalScorer {
    fn scorer_id(&self) -> String {
        "lexical-overlap".into()
    }

    fn entails(&self, sentence: &str, fact: &str) -> Result<bool> {
        Ok(mock::entails(sentence, fact))
    }
}

pub struct LlmScorer<'a> {
    client: &'a LlmClient,
    prompts: &'a PromptSet,
}

impl<'a> LlmScorer<'a> {
    pub fn new(client: &'a LlmClient, prompts: &'a PromptSet) -> Self {
        Self { client, prompts }
    }
}

impl EntailmentScorer for LlmScorer<'_> {
    fn scorer_id(&self) -> String {
        format!("llm:{}:{}", self.client.backend_name(), self.client.model_id())
    }

    fn entails(&self, sentence: &str, fact: &str) -> Result<bool> {
        let resp = self
            .client
            .complete(Task::Entail, &self.prompts.entail_prompt(sentence, fact))?;
        match resp.parsed {
            Payload::Verdict(v) => Ok(v),
            _ => unreachable!("entail task yields a verdict"),
        }
    }
}

/// Content-addressed id for a (sentence, fact) cell in the classifier pair
/// file, so verdicts can be looked up from the texts alone.
pub fn cell_pair_id(sentence: &str, fact: &str) -> String {
    let mut h = Sha256::new();
    h.update(sentence.as_bytes());
    h.update([0x1f]);
    h.update(fact.as_bytes());
    hex::encode(h.finalize())[..24].to_string()
}

/// One line of the classifier input file: claim = fact, text = sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPair {
    pub id: String,
    pub claim: String,
    pub text: String,
}

/// Every distinct cell of a prospective table, row-major.
pub fn cell_pairs(sentences: &[String], facts: &[String]) -> Vec<CellPair> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in sentences {
        for f in facts {
            let id = cell_pair_id(s, f);
            if seen.insert(id.clone()) {
                out.push(CellPair {
                    id,
                    claim: f.clone(),
                    text: s.clone(),
                });
            }
        }
    }
    out
}

/// Verdicts read back from a trained classifier's predictions file.
#[derive(Debug, Clone)]
pub struct PredictionScorer {
    id: String,
    verdicts: HashMap<String, bool>,
}

impl PredictionScorer {
    pub fn new(id: impl Into<String>, verdicts: HashMap<String, bool>) -> Self {
        Self {
            id: id.into(),
            verdicts,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let preds = evaluation::read_predictions(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
        let verdicts = preds.into_iter().map(|p| (p.id, p.predicted.as_bool())).collect();
        Ok(Self::new(format!("classifier:{stem}"), verdicts))
    }
}

impl EntailmentScorer for PredictionScorer {
    fn scorer_id(&self) -> String {
        self.id.clone()
    }

    fn entails(&self, sentence: &str, fact: &str) -> Result<bool> {
        let id = cell_pair_id(sentence, fact);
        self.verdicts
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Reference(format!("no prediction for cell pair {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRecord")]
pub struct SentenceFactTable {
    doc_id: String,
    sentences: Vec<String>,
    facts: Vec<String>,
    /// Row-major, `sentences.len()` rows of `facts.len()` cells.
    matrix: Vec<Vec<bool>>,
    scorer_id: String,
}

#[derive(Deserialize)]
struct TableRecord {
    doc_id: String,
    sentences: Vec<String>,
    facts: Vec<String>,
    matrix: Vec<Vec<bool>>,
    scorer_id: String,
}

impl TryFrom<TableRecord> for SentenceFactTable {
    type Error = Error;

    fn try_from(r: TableRecord) -> Result<Self> {
        Self::new(r.doc_id, r.sentences, r.facts, r.matrix, r.scorer_id)
    }
}

impl SentenceFactTable {
    pub fn new(
        doc_id: impl Into<String>,
        sentences: Vec<String>,
        facts: Vec<String>,
        matrix: Vec<Vec<bool>>,
        scorer_id: impl Into<String>,
    ) -> Result<Self> {
        if matrix.len() != sentences.len() {
            return Err(Error::Contract(format!(
                "matrix has {} rows for {} sentences",
                matrix.len(),
                sentences.len()
            )));
        }
        if let Some((r, row)) = matrix.iter().enumerate().find(|(_, row)| row.len() != facts.len()) {
            return Err(Error::Contract(format!(
                "matrix row {r} has {} cells for {} facts",
                row.len(),
                facts.len()
            )));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            sentences,
            facts,
            matrix,
            scorer_id: scorer_id.into(),
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn facts(&self) -> &[String] {
        &self.facts
    }

    pub fn matrix(&self) -> &[Vec<bool>] {
        &self.matrix
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    pub fn n_rows(&self) -> usize {
        self.sentences.len()
    }

    pub fn n_cols(&self) -> usize {
        self.facts.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<bool> {
        let r = self.matrix.get(row).ok_or(Error::Bounds {
            index: row,
            len: self.n_rows(),
        })?;
        r.get(col).copied().ok_or(Error::Bounds {
            index: col,
            len: self.n_cols(),
        })
    }

    pub fn column(&self, col: usize) -> Result<Vec<bool>> {
        if col >= self.n_cols() {
            return Err(Error::Bounds {
                index: col,
                len: self.n_cols(),
            });
        }
        Ok(self.matrix.iter().map(|r| r[col]).collect())
    }

    /// OR of the fact column over `rows`; false for an empty selection.
    pub fn supports_any(&self, rows: &[usize], fact_col: usize) -> Result<bool> {
        if fact_col >= self.n_cols() {
            return Err(Error::Bounds {
                index: fact_col,
                len: self.n_cols(),
            });
        }
        let mut any = false;
        for &r in rows {
            any |= self.cell(r, fact_col)?;
        }
        Ok(any)
    }

    /// Columns with no supporting sentence, ascending.
    pub fn unsupported_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&c| self.matrix.iter().all(|row| !row[c]))
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }
}

/// Scores every (sentence, fact) cell exactly once. Cells are independent
/// and run concurrently under `Execution::Parallel`.
pub fn build_table(
    doc: &Document,
    facts: &[AtomicFact],
    scorer: &dyn EntailmentScorer,
    exec: Execution,
) -> Result<SentenceFactTable> {
    let fact_texts: Vec<String> = facts.iter().map(|f| f.text.clone()).collect();
    build_table_from_texts(&doc.id, &doc.sentences, &fact_texts, scorer, exec)
}

pub fn build_table_from_texts(
    doc_id: &str,
    sentences: &[String],
    facts: &[String],
    scorer: &dyn EntailmentScorer,
    exec: Execution,
) -> Result<SentenceFactTable> {
    if facts.is_empty() {
        return Err(Error::Precondition(format!("document {doc_id} has no facts")));
    }
    if sentences.is_empty() {
        return Err(Error::Precondition(format!("document {doc_id} is not segmented")));
    }
    let cols = facts.len();
    let cells = par::map_range(exec, sentences.len() * cols, |i| {
        let (row, col) = (i / cols, i % cols);
        scorer.entails(&sentences[row], &facts[col]).map_err(|e| Error::Cell {
            row,
            col,
            source: Box::new(e),
        })
    });
    let mut matrix = vec![Vec::with_capacity(cols); sentences.len()];
    for (i, cell) in cells.into_iter().enumerate() {
        matrix[i / cols].push(cell?);
    }
    SentenceFactTable::new(doc_id, sentences.to_vec(), facts.to_vec(), matrix, scorer.scorer_id())
}

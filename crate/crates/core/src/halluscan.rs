//! Hallucination scan: a summary fact that no single document sentence
//! supports (an all-false table column) is flagged as abnormal.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::decomposition::{FactDecomposer, Summary};
use crate::error::{Error, Result};
use crate::fact_table::{build_table, EntailmentScorer, SentenceFactTable};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Abnormal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedFact {
    pub fact_index: usize,
    pub fact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub doc_id: String,
    #[serde(rename = "summary")]
    pub summary_text: String,
    pub verdict: Verdict,
    pub flagged: Vec<FlaggedFact>,
    pub table: SentenceFactTable,
}

pub fn scan(
    doc: &Document,
    summary: &Summary,
    decomposer: &dyn FactDecomposer,
    scorer: &dyn EntailmentScorer,
    exec: Execution,
) -> Result<ScanReport> {
    if !doc.is_segmented() {
        return Err(Error::Precondition(format!("document {} is not segmented", doc.id)));
    }
    let facts = decomposer.decompose(summary)?;
    if facts.is_empty() {
        return Err(Error::Precondition(format!("summary of {} yielded no facts", doc.id)));
    }
    let table = build_table(doc, &facts, scorer, exec).map_err(|e| e.in_document(&doc.id))?;
    Ok(report_from_table(summary.text.clone(), table))
}

/// Builds the report for an already-filled table.
pub fn report_from_table(summary_text: String, table: SentenceFactTable) -> ScanReport {
    let flagged: Vec<FlaggedFact> = table
        .unsupported_columns()
        .into_iter()
        .map(|c| FlaggedFact {
            fact_index: c,
            fact: table.facts()[c].clone(),
        })
        .collect();
    ScanReport {
        doc_id: table.doc_id().to_string(),
        summary_text,
        verdict: if flagged.is_empty() {
            Verdict::Clean
        } else {
            Verdict::Abnormal
        },
        flagged,
        table,
    }
}

#[derive(Debug, Default)]
pub struct BatchScan {
    pub reports: Vec<ScanReport>,
    /// `(doc_id, error)` for pairs that could not be scanned.
    pub errors: Vec<(String, Error)>,
    pub n_scanned: usize,
    pub n_abnormal: usize,
}

/// Scans pairs concurrently; reports keep input order and per-pair failures
/// are collected without stopping the batch.
pub fn batch_scan(
    pairs: &[(Document, Summary)],
    decomposer: &dyn FactDecomposer,
    scorer: &dyn EntailmentScorer,
    exec: Execution,
) -> BatchScan {
    // cells run sequentially inside each pair; pairs fan out
    let results = par::map(exec, pairs, |(doc, summary)| {
        scan(doc, summary, decomposer, scorer, Execution::Sequential)
    });
    let mut out = BatchScan::default();
    for ((doc, _), r) in pairs.iter().zip(results) {
        match r {
            Ok(report) => {
                if report.verdict == Verdict::Abnormal {
                    out.n_abnormal += 1;
                }
                out.reports.push(report);
            }
            Err(e) => out.errors.push((doc.id.clone(), e)),
        }
    }
    out.n_scanned = out.reports.len();
    out
}

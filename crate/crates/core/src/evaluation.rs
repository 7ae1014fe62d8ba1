//! Precision / recall / F1 with "true" as the positive class, Table-2 style
//! comparison reports, and (P, R, F) consistency checks.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: Label,
    /// Present in classifier output; ignored for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub id: String,
    pub label: Label,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}

/// Reads `{"id", "label"}` lines; other keys are ignored and lines whose
/// label is null are skipped, so ingest artifacts double as gold files.
pub fn read_gold(path: &Path) -> Result<Vec<GoldLabel>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        label: Option<Label>,
    }
    let lines: Vec<Line> = read_jsonl(path)?;
    Ok(lines
        .into_iter()
        .filter_map(|l| l.label.map(|label| GoldLabel { id: l.id, label }))
        .collect())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub positive_class: String,
    /// Gold ids with no prediction; each is counted as a wrong answer.
    pub missing: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut warnings = Vec::new();
        let precision = ratio(tp, tp + fp).unwrap_or_else(|| {
            warnings.push("no positive predictions; precision set to 0".into());
            0.0
        });
        let recall = ratio(tp, tp + fn_).unwrap_or_else(|| {
            warnings.push("no positive gold labels; recall set to 0".into());
            0.0
        });
        let f1 = f1_score(precision, recall);
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            positive_class: Label::True.to_string(),
            missing: 0,
            warnings,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn score(predictions: &[Prediction], gold: &[GoldLabel]) -> Result<EvalReport> {
    let mut gold_by_id: HashMap<&str, Label> = HashMap::with_capacity(gold.len());
    for g in gold {
        if gold_by_id.insert(g.id.as_str(), g.label).is_some() {
            return Err(Error::Input(format!("duplicate gold id {:?}", g.id)));
        }
    }
    let mut seen: HashSet<&str> = HashSet::with_capacity(predictions.len());
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for p in predictions {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Input(format!("duplicate prediction id {:?}", p.id)));
        }
        let gold_label = *gold_by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::Reference(format!("prediction id {:?} not in gold set", p.id)))?;
        match (p.predicted, gold_label) {
            (Label::True, Label::True) => tp += 1,
            (Label::True, Label::False) => fp += 1,
            (Label::False, Label::True) => fn_ += 1,
            (Label::False, Label::False) => tn += 1,
        }
    }
    let mut missing = 0;
    for g in gold {
        if !seen.contains(g.id.as_str()) {
            missing += 1;
            match g.label {
                Label::True => fn_ += 1,
                Label::False => fp += 1,
            }
        }
    }
    let mut report = EvalReport::from_counts(tp, fp, fn_, tn);
    report.missing = missing;
    if missing > 0 {
        report.warnings.push(format!("{missing} gold id(s) had no prediction"));
    }
    Ok(report)
}

pub const CONSISTENCY_TOLERANCE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub row: usize,
    pub precision: f64,
    pub recall: f64,
    pub reported_f1: f64,
    pub implied_f1: f64,
}

impl Violation {
    pub fn gap(&self) -> f64 {
        (self.reported_f1 - self.implied_f1).abs()
    }
}

/// Rows whose reported F differs from `2PR / (P + R)` by more than the
/// rounding tolerance.
pub fn consistency_check(rows: &[(f64, f64, f64)]) -> Vec<Violation> {
    rows.iter()
        .enumerate()
        .filter_map(|(row, &(precision, recall, reported_f1))| {
            let implied_f1 = f1_score(precision, recall);
            ((reported_f1 - implied_f1).abs() > CONSISTENCY_TOLERANCE).then_some(Violation {
                row,
                precision,
                recall,
                reported_f1,
                implied_f1,
            })
        })
        .collect()
}

/// Grid of reports: rows (e.g. synthetic proportions) by columns (e.g.
/// subset sizes).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// Keyed by `(row, column)` position.
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub row: String,
    pub column: String,
    pub report: EvalReport,
}

impl ComparisonReport {
    pub fn insert(&mut self, row: &str, column: &str, report: EvalReport) {
        if !self.rows.iter().any(|r| r == row) {
            self.rows.push(row.to_string());
        }
        if !self.columns.iter().any(|c| c == column) {
            self.columns.push(column.to_string());
        }
        self.cells.retain(|c| !(c.row == row && c.column == column));
        self.cells.push(ComparisonCell {
            row: row.to_string(),
            column: column.to_string(),
            report,
        });
    }

    pub fn get(&self, row: &str, column: &str) -> Option<&EvalReport> {
        self.cells
            .iter()
            .find(|c| c.row == row && c.column == column)
            .map(|c| &c.report)
    }

    /// Aligned text table: one line per row, P/R/F triples per column.
    pub fn render_text(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.len()).chain([4]).max().unwrap_or(4);
        let group_w = 20;
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for c in &self.columns {
            let _ = write!(out, "  {c:^group_w$}");
        }
        out.push('\n');
        let _ = write!(out, "{:label_w$}", "");
        for _ in &self.columns {
            let _ = write!(out, "  {:>6} {:>6} {:>6}", "P", "R", "F");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{r:label_w$}");
            for c in &self.columns {
                match self.get(r, c) {
                    Some(rep) => {
                        let _ = write!(out, "  {:>6.3} {:>6.3} {:>6.3}", rep.precision, rep.recall, rep.f1);
                    }
                    None => {
                        let _ = write!(out, "  {:>6} {:>6} {:>6}", "-", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

//! Corpus ingestion: PubHealth TSV, SciFact JSONL, and a generic JSONL
//! document format, plus length filtering, balanced subsets and statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::{self, SegmentationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pubhealth,
    Scifact,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "true")]
    True,
    #[serde(rename = "false")]
    False,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::True
        } else {
            Label::False
        }
    }

    pub fn as_bool(self) -> bool {
        self == Label::True
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::True => "true",
            Label::False => "false",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Empty until segmented.
    pub sentences: Vec<String>,
    pub source: Source,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            sentences: Vec::new(),
            source,
        }
    }

    /// Builds a document whose sentences are already known; `text` becomes
    /// their space-joined, whitespace-normalized form.
    pub fn from_sentences(id: impl Into<String>, sentences: Vec<String>, source: Source) -> Self {
        let sentences: Vec<String> = sentences
            .iter()
            .map(|s| segmenter::normalize_whitespace(s))
            .filter(|s| !s.is_empty())
            .collect();
        Self {
            id: id.into(),
            text: sentences.join(" "),
            sentences,
            source,
        }
    }

    pub fn is_segmented(&self) -> bool {
        !self.sentences.is_empty()
    }

    /// Fills `sentences` from `text` unless they are already present.
    pub fn segment(&mut self, cfg: &SegmentationConfig) -> Result<()> {
        if self.sentences.is_empty() {
            self.sentences = segmenter::segment(&self.text, cfg).map_err(|e| e.in_document(&self.id))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim: String,
    pub label: Label,
    pub doc_id: String,
}

/// One ingested record. PubHealth and SciFact pairs always carry a claim;
/// generic documents may not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub id: String,
    pub document: Document,
    pub claim: Option<ClaimRecord>,
}

impl Pair {
    pub fn label(&self) -> Option<Label> {
        self.claim.as_ref().map(|c| c.label)
    }
}

/// A row or reference that could not be ingested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line (or record) number in the source file.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub pairs: Vec<Pair>,
    pub errors: Vec<RowError>,
    /// Rows dropped on purpose (mixture/unproven, NEUTRAL).
    pub excluded: usize,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

const PUBHEALTH_COLUMNS: [&str; 4] = ["claim_id", "claim", "main_text", "label"];

/// Reads a PubHealth TSV (header row with `claim_id`, `claim`, `main_text`,
/// `label`). Only `true`/`false` rows are kept.
pub fn load_pubhealth(path: &Path) -> Result<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(PUBHEALTH_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column '{name}'", path.display())))?;
    }

    let mut out = Loaded::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |idx: usize| row.get(cols[idx]).map(str::trim).filter(|v| !v.is_empty());
        let (Some(id), Some(claim), Some(text), Some(label)) = (field(0), field(1), field(2), field(3)) else {
            let missing: Vec<&str> = (0..4)
                .filter(|&k| field(k).is_none())
                .map(|k| PUBHEALTH_COLUMNS[k])
                .collect();
            out.errors.push(RowError {
                line,
                message: format!("missing required field(s): {}", missing.join(", ")),
            });
            continue;
        };
        let label = match label {
            "true" => Label::True,
            "false" => Label::False,
            "mixture" | "unproven" => {
                out.excluded += 1;
                continue;
            }
            other => {
                out.errors.push(RowError {
                    line,
                    message: format!("unknown label {other:?}"),
                });
                continue;
            }
        };
        out.pairs.push(Pair {
            id: id.to_string(),
            document: Document::new(id, text, Source::Pubhealth),
            claim: Some(ClaimRecord {
                claim: claim.to_string(),
                label,
                doc_id: id.to_string(),
            }),
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ScifactAbstract {
    doc_id: u64,
    #[serde(default)]
    #[allow(dead_code)]
    title: String,
    #[serde(rename = "abstract")]
    sentences: Vec<String>,
}

#[derive(Deserialize)]
struct ScifactClaim {
    id: u64,
    claim: String,
    #[serde(default)]
    evidence: BTreeMap<String, Vec<ScifactEvidence>>,
}

#[derive(Deserialize)]
struct ScifactEvidence {
    label: String,
}

/// Reads SciFact `corpus.jsonl` + `claims.jsonl`. Emits one pair per
/// (claim, annotated abstract), keeping SUPPORT (true) and CONTRADICT (false).
pub fn load_scifact(corpus_path: &Path, claims_path: &Path) -> Result<Loaded> {
    let mut out = Loaded::default();

    let mut abstracts: HashMap<String, Document> = HashMap::new();
    for (i, line) in read_file(corpus_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ScifactAbstract>(line) {
            Ok(a) => {
                let id = a.doc_id.to_string();
                abstracts.insert(id.clone(), Document::from_sentences(id, a.sentences, Source::Scifact));
            }
            Err(e) => out.errors.push(RowError {
                line: i + 1,
                message: format!("corpus: {e}"),
            }),
        }
    }

    for (i, line) in read_file(claims_path)?.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let claim: ScifactClaim = match serde_json::from_str(line) {
            Ok(c) => c,
            Err(e) => {
                out.errors.push(RowError {
                    line: line_no,
                    message: format!("claims: {e}"),
                });
                continue;
            }
        };
        let mut evidence: Vec<(&String, &Vec<ScifactEvidence>)> = claim.evidence.iter().collect();
        evidence.sort_by_key(|(k, _)| (k.parse::<u64>().unwrap_or(u64::MAX), k.to_string()));
        if evidence.is_empty() {
            out.excluded += 1;
        }
        for (doc_id, entries) in evidence {
            let mut labels: Vec<&str> = entries.iter().map(|e| e.label.as_str()).collect();
            labels.dedup();
            let label = match labels.as_slice() {
                ["SUPPORT"] => Label::True,
                ["CONTRADICT"] => Label::False,
                [] | ["NEUTRAL"] => {
                    out.excluded += 1;
                    continue;
                }
                other => {
                    out.errors.push(RowError {
                        line: line_no,
                        message: format!("claim {}: unusable labels {other:?} for abstract {doc_id}", claim.id),
                    });
                    continue;
                }
            };
            let Some(doc) = abstracts.get(doc_id) else {
                out.errors.push(RowError {
                    line: line_no,
                    message: format!("claim {} references missing abstract {doc_id}", claim.id),
                });
                continue;
            };
            out.pairs.push(Pair {
                id: format!("{}-{}", claim.id, doc_id),
                document: doc.clone(),
                claim: Some(ClaimRecord {
                    claim: claim.claim.clone(),
                    label,
                    doc_id: doc_id.clone(),
                }),
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct GenericLine {
    id: String,
    text: String,
    #[serde(default)]
    claim: Option<String>,
    #[serde(default)]
    label: Option<Label>,
}

/// Reads generic JSONL documents: `{"id", "text", "claim"?, "label"?}`.
pub fn load_generic(path: &Path) -> Result<Loaded> {
    let mut out = Loaded::default();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in read_file(path)?.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GenericLine = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(RowError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if rec.id.is_empty() || rec.text.trim().is_empty() {
            out.errors.push(RowError {
                line: line_no,
                message: "empty id or text".into(),
            });
            continue;
        }
        if !seen.insert(rec.id.clone()) {
            out.errors.push(RowError {
                line: line_no,
                message: format!("duplicate id {:?}", rec.id),
            });
            continue;
        }
        let claim = match (rec.claim, rec.label) {
            (Some(c), Some(label)) if !c.trim().is_empty() => Some(ClaimRecord {
                claim: c,
                label,
                doc_id: rec.id.clone(),
            }),
            (None, None) => None,
            _ => {
                out.errors.push(RowError {
                    line: line_no,
                    message: "claim and label must be given together".into(),
                });
                continue;
            }
        };
        out.pairs.push(Pair {
            id: rec.id.clone(),
            document: Document::new(rec.id, rec.text, Source::Generic),
            claim,
        });
    }
    Ok(out)
}

pub const MIN_SENTENCES_EXCLUSIVE: usize = 3;
pub const MAX_SENTENCES_EXCLUSIVE: usize = 40;

/// Keeps documents with `min_excl < sentences < max_excl`.
pub fn filter_by_length(docs: Vec<Document>, min_excl: usize, max_excl: usize) -> Result<Vec<Document>> {
    if let Some(d) = docs.iter().find(|d| d.sentences.is_empty()) {
        return Err(Error::Contract(format!("document {} is not segmented", d.id)));
    }
    Ok(docs
        .into_iter()
        .filter(|d| d.sentences.len() > min_excl && d.sentences.len() < max_excl)
        .collect())
}

/// [`filter_by_length`] over pairs, by their documents.
pub fn filter_pairs_by_length(pairs: Vec<Pair>, min_excl: usize, max_excl: usize) -> Result<Vec<Pair>> {
    if let Some(p) = pairs.iter().find(|p| p.document.sentences.is_empty()) {
        return Err(Error::Contract(format!("document {} is not segmented", p.document.id)));
    }
    Ok(pairs
        .into_iter()
        .filter(|p| {
            let n = p.document.sentences.len();
            n > min_excl && n < max_excl
        })
        .collect())
}

/// Draws `k / 2` pairs of each label without replacement and interleaves
/// them true, false, true, false... Unlabeled pairs are ignored.
pub fn select_balanced_subset(pairs: &[Pair], k: usize, seed: u64) -> Result<Vec<Pair>> {
    if !k.is_multiple_of(2) {
        return Err(Error::Precondition(format!("subset size {k} is odd")));
    }
    let half = k / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(2);
    for label in [Label::True, Label::False] {
        let mut pool: Vec<&Pair> = pairs.iter().filter(|p| p.label() == Some(label)).collect();
        if pool.len() < half {
            return Err(Error::Capacity {
                label: label.to_string(),
                needed: half,
                available: pool.len(),
            });
        }
        let (chosen, _) = pool.partial_shuffle(&mut rng, half);
        draws.push(chosen.to_vec());
    }
    let (trues, falses) = (&draws[0], &draws[1]);
    Ok(trues
        .iter()
        .zip(falses.iter())
        .flat_map(|(t, f)| [(*t).clone(), (*f).clone()])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_total: usize,
    pub n_true: usize,
    pub n_false: usize,
    pub avg_doc_sentences: f64,
    pub avg_doc_words: f64,
    pub avg_claim_sentences: f64,
    pub avg_claim_words: f64,
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Table-1 style statistics. Document means are over all pairs, claim means
/// over labeled pairs; claims are segmented with `cfg`.
pub fn compute_stats(pairs: &[Pair], cfg: &SegmentationConfig) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    if pairs.is_empty() {
        return Ok(stats);
    }
    let mut doc_sents = 0usize;
    let mut doc_words = 0usize;
    let mut claim_sents = 0usize;
    let mut claim_words = 0usize;
    for p in pairs {
        if !p.document.is_segmented() {
            return Err(Error::Contract(format!("document {} is not segmented", p.document.id)));
        }
        doc_sents += p.document.sentences.len();
        doc_words += word_count(&p.document.text);
        if let Some(c) = &p.claim {
            match c.label {
                Label::True => stats.n_true += 1,
                Label::False => stats.n_false += 1,
            }
            claim_words += word_count(&c.claim);
            claim_sents += segmenter::segment(&c.claim, cfg).map(|s| s.len()).unwrap_or(0);
        }
    }
    stats.n_total = stats.n_true + stats.n_false;
    let n = pairs.len() as f64;
    stats.avg_doc_sentences = doc_sents as f64 / n;
    stats.avg_doc_words = doc_words as f64 / n;
    if stats.n_total > 0 {
        stats.avg_claim_sentences = claim_sents as f64 / stats.n_total as f64;
        stats.avg_claim_words = claim_words as f64 / stats.n_total as f64;
    }
    Ok(stats)
}

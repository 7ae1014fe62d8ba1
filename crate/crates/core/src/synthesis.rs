//! Synthetic text–claim pairs by proportional sentence sampling over
//! sentence–fact tables, and the augmented training set.
//!
//! For each instance a `p%` sample of a document's sentences is drawn without
//! replacement, re-joined in document order, and paired with one fact column.
//! The label is true iff any sampled sentence supports that fact.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Label, Pair};
use crate::error::{Error, Result};
use crate::fact_table::SentenceFactTable;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FactSelection {
    #[default]
    Uniform,
    BalanceTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub proportion_pct: u32,
    pub instances_per_document: usize,
    pub seed: u64,
    pub fact_selection: FactSelection,
}

impl SynthesisConfig {
    pub fn new(proportion_pct: u32, seed: u64) -> Result<Self> {
        let cfg = Self {
            proportion_pct,
            instances_per_document: 1,
            seed,
            fact_selection: FactSelection::Uniform,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.proportion_pct > 100 {
            return Err(Error::Validation(format!(
                "proportion {}% exceeds 100",
                self.proportion_pct
            )));
        }
        if self.instances_per_document < 1 {
            return Err(Error::Validation("instances_per_document must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    pub claim: String,
    pub label: Label,
    pub selected_sentence_indices: Vec<usize>,
    pub fact_index: usize,
    pub proportion_pct: u32,
    pub seed: u64,
}

/// `round_half_up(n * p / 100)` floored at one sentence; zero only when `p`
/// is zero.
pub fn sample_size(n_sentences: usize, proportion_pct: u32) -> usize {
    if proportion_pct == 0 {
        return 0;
    }
    let p = proportion_pct.min(100) as usize;
    ((n_sentences * p + 50) / 100).max(1)
}

/// Generator for one (document, instance ordinal), independent of how the
/// surrounding work is scheduled.
fn instance_rng(seed: u64, doc_id: &str, ordinal: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((doc_id.len() as u64).to_le_bytes());
    h.update(doc_id.as_bytes());
    h.update((ordinal as u64).to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelHistogram {
    pub n_true: usize,
    pub n_false: usize,
}

impl LabelHistogram {
    fn add(&mut self, label: Label) {
        match label {
            Label::True => self.n_true += 1,
            Label::False => self.n_false += 1,
        }
    }

    /// The under-represented label, if the split lies outside 55/45.
    fn minority(&self) -> Option<Label> {
        let total = self.n_true + self.n_false;
        if total == 0 {
            return None;
        }
        // n / total > 0.55  <=>  20 n > 11 total
        if 20 * self.n_true > 11 * total {
            Some(Label::False)
        } else if 20 * self.n_false > 11 * total {
            Some(Label::True)
        } else {
            None
        }
    }
}

const BALANCE_REDRAWS: usize = 10;

fn make_instance(
    table: &SentenceFactTable,
    cfg: &SynthesisConfig,
    ordinal: usize,
    histogram: Option<&mut LabelHistogram>,
) -> Result<SyntheticInstance> {
    let n = table.n_rows();
    let mut rng = instance_rng(cfg.seed, table.doc_id(), ordinal);
    let k = sample_size(n, cfg.proportion_pct);
    let mut selected = index::sample(&mut rng, n, k).into_vec();
    selected.sort_unstable();

    let mut fact_index = rng.random_range(0..table.n_cols());
    let mut label = Label::from_bool(table.supports_any(&selected, fact_index)?);
    if let Some(hist) = histogram {
        if let Some(wanted) = hist.minority().filter(|&m| m != label) {
            for _ in 0..BALANCE_REDRAWS {
                let candidate = rng.random_range(0..table.n_cols());
                let cand_label = Label::from_bool(table.supports_any(&selected, candidate)?);
                if cand_label == wanted {
                    fact_index = candidate;
                    label = cand_label;
                    break;
                }
            }
        }
        hist.add(label);
    }

    let text = selected
        .iter()
        .map(|&i| table.sentences()[i].as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(SyntheticInstance {
        id: format!("{}-p{}-s{}-{}", table.doc_id(), cfg.proportion_pct, cfg.seed, ordinal),
        doc_id: table.doc_id().to_string(),
        text,
        claim: table.facts()[fact_index].clone(),
        label,
        selected_sentence_indices: selected,
        fact_index,
        proportion_pct: cfg.proportion_pct,
        seed: cfg.seed,
    })
}

fn check_table(table: &SentenceFactTable) -> Result<()> {
    if table.n_cols() == 0 {
        return Err(Error::Precondition(format!("table {} has no facts", table.doc_id())));
    }
    if table.n_rows() == 0 {
        return Err(Error::Precondition(format!(
            "table {} has no sentences",
            table.doc_id()
        )));
    }
    Ok(())
}

/// Instances for one table. `p = 0` yields none.
pub fn synthesize(table: &SentenceFactTable, cfg: &SynthesisConfig) -> Result<Vec<SyntheticInstance>> {
    let mut hist = LabelHistogram::default();
    synthesize_with(table, cfg, &mut hist)
}

fn synthesize_with(
    table: &SentenceFactTable,
    cfg: &SynthesisConfig,
    hist: &mut LabelHistogram,
) -> Result<Vec<SyntheticInstance>> {
    cfg.validate()?;
    check_table(table)?;
    if cfg.proportion_pct == 0 {
        return Ok(Vec::new());
    }
    let balance = cfg.fact_selection == FactSelection::BalanceTarget;
    (0..cfg.instances_per_document)
        .map(|ordinal| make_instance(table, cfg, ordinal, balance.then_some(&mut *hist)))
        .collect()
}

/// Instances for many tables, in table order. Uniform selection runs tables
/// in parallel; balance-target selection carries one running histogram and
/// therefore runs sequentially.
pub fn synthesize_all(
    tables: &[SentenceFactTable],
    cfg: &SynthesisConfig,
    exec: Execution,
) -> Result<Vec<SyntheticInstance>> {
    cfg.validate()?;
    let batches = match cfg.fact_selection {
        FactSelection::Uniform => par::try_map(exec, tables, |t| synthesize(t, cfg))?,
        FactSelection::BalanceTarget => {
            let mut hist = LabelHistogram::default();
            tables
                .iter()
                .map(|t| synthesize_with(t, cfg, &mut hist))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(batches.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub text: String,
    pub claim: String,
    pub label: Label,
    pub origin: Origin,
}

/// Originals (full document text) followed by synthetics, then one seeded
/// shuffle. Unlabeled originals are skipped.
pub fn build_augmented_set(original: &[Pair], synthetic: &[SyntheticInstance], seed: u64) -> Vec<AugmentedRecord> {
    let mut records: Vec<AugmentedRecord> = original
        .iter()
        .filter_map(|p| {
            p.claim.as_ref().map(|c| AugmentedRecord {
                text: p.document.text.clone(),
                claim: c.claim.clone(),
                label: c.label,
                origin: Origin::Original,
            })
        })
        .chain(synthetic.iter().map(|s| AugmentedRecord {
            text: s.text.clone(),
            claim: s.claim.clone(),
            label: s.label,
            origin: Origin::Synthetic,
        }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    records
}

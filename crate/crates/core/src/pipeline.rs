//! Stage orchestration: each stage writes `{out}/{stage}.jsonl` atomically
//! and records config, seed, counts and content hashes in
//! `{out}/manifest.json`. A stage whose fingerprint (relevant config plus
//! upstream hashes) and outputs are unchanged is skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::corpus::{self, ClaimRecord, Document, Label, Pair, Source};
use crate::decomposition::{AtomicFact, Decomposer, FactDecomposer, Summary};
use crate::error::{Error, Result};
use crate::evaluation::{self, ComparisonReport};
use crate::fact_table::{self, EntailmentScorer, LlmScorer, PredictionScorer, SentenceFactTable};
use crate::halluscan;
use crate::llm::{HttpBackend, LlmBackend, LlmClient, MockBackend, ResponseCache};
use crate::par::{self, Execution};
use crate::prompts::PromptSet;
use crate::schema::{self, Artifact};
use crate::segmenter::SegmentationConfig;
use crate::synthesis::{self, FactSelection, SynthesisConfig, SyntheticInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Pubhealth,
    Scifact,
    #[default]
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    #[default]
    Mock,
}

pub const DEFAULT_MODEL: &str = "gpt-4-turbo-2024-04-09";
pub const DEFAULT_CACHE_DIR: &str = ".factforge-cache";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// PubHealth TSV or generic JSONL.
    pub input: Option<PathBuf>,
    /// SciFact `corpus.jsonl`.
    pub corpus: Option<PathBuf>,
    /// SciFact `claims.jsonl`.
    pub claims: Option<PathBuf>,
    /// Apply the 3 < sentences < 40 document filter. Defaults to on for
    /// PubHealth only.
    pub filter_length: Option<bool>,
    pub subset_size: Option<usize>,
    pub model: String,
    pub temperature: f64,
    pub proportions: Vec<u32>,
    pub instances_per_doc: usize,
    pub fact_selection: FactSelection,
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub backend: BackendMode,
    pub concurrency: usize,
    pub prompt_dir: Option<PathBuf>,
    pub abbrev_file: Option<PathBuf>,
    /// Prediction files: `PATH`, `ROW=PATH` or `ROW/COLUMN=PATH`. `score`
    /// evaluates them; `scan` uses the first as its cell verdicts.
    pub pred: Vec<String>,
    pub gold: Option<PathBuf>,
    /// `scan` writes the classifier pair file here instead of scanning.
    pub export_pairs: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Generic,
            input: None,
            corpus: None,
            claims: None,
            filter_length: None,
            subset_size: None,
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            proportions: vec![100],
            instances_per_doc: 1,
            fact_selection: FactSelection::Uniform,
            seed: 0,
            cache_dir: PathBuf::from(DEFAULT_CACHE_DIR),
            out: PathBuf::from("out"),
            backend: BackendMode::Mock,
            concurrency: crate::llm::DEFAULT_CONCURRENCY,
            prompt_dir: None,
            abbrev_file: None,
            pred: Vec::new(),
            gold: None,
            export_pairs: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.proportions.is_empty() {
            return bad("at least one proportion is required".into());
        }
        if let Some(p) = self.proportions.iter().find(|&&p| p > 100) {
            return bad(format!("proportion {p} outside [0, 100]"));
        }
        let mut seen = HashSet::new();
        if let Some(p) = self.proportions.iter().find(|p| !seen.insert(**p)) {
            return bad(format!("proportion {p} listed twice"));
        }
        if self.instances_per_doc < 1 {
            return bad("instances_per_doc must be at least 1".into());
        }
        if self.concurrency < 1 {
            return bad("concurrency must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if let Some(k) = self.subset_size {
            if !k.is_multiple_of(2) {
                return bad(format!("subset size {k} must be even"));
            }
        }
        if self.model.trim().is_empty() {
            return bad("model id is empty".into());
        }
        Ok(())
    }

    fn filter_enabled(&self) -> bool {
        self.filter_length.unwrap_or(self.dataset == DatasetKind::Pubhealth)
    }

    /// The config as recorded in the manifest: everything that can change
    /// an artifact, without machine-local locations.
    fn recorded(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for key in ["out", "cache_dir", "concurrency", "export_pairs"] {
                map.remove(key);
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Summarize,
    Decompose,
    Table,
    Synth,
    Augment,
    Scan,
    Score,
}

impl Stage {
    /// Stages executed by `run-all`, in order.
    pub const MAIN: [Stage; 6] = [
        Stage::Ingest,
        Stage::Summarize,
        Stage::Decompose,
        Stage::Table,
        Stage::Synth,
        Stage::Augment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Summarize => "summarize",
            Stage::Decompose => "decompose",
            Stage::Table => "table",
            Stage::Synth => "synth",
            Stage::Augment => "augment",
            Stage::Scan => "scan",
            Stage::Score => "score",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Score => &[],
            Stage::Summarize => &[Stage::Ingest],
            Stage::Decompose => &[Stage::Summarize],
            Stage::Table => &[Stage::Ingest, Stage::Decompose],
            Stage::Synth => &[Stage::Table],
            Stage::Augment => &[Stage::Ingest, Stage::Synth],
            Stage::Scan => &[Stage::Ingest, Stage::Summarize],
        }
    }

    pub fn artifact(self) -> Option<Artifact> {
        match self {
            Stage::Ingest => Some(Artifact::Ingest),
            Stage::Summarize => Some(Artifact::Summarize),
            Stage::Decompose => Some(Artifact::Decompose),
            Stage::Table => Some(Artifact::Table),
            Stage::Synth => Some(Artifact::Synth),
            Stage::Augment => Some(Artifact::Augment),
            Stage::Scan => Some(Artifact::Scan),
            Stage::Score => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    /// File name → sha256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub count: usize,
    #[serde(default)]
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// False when the stage was already up to date.
    pub ran: bool,
    pub outputs: Vec<PathBuf>,
    pub count: usize,
    pub errors: usize,
}

/// Ingested pair as one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub id: String,
    pub doc_id: String,
    pub source: Source,
    pub text: String,
    pub sentences: Vec<String>,
    pub claim: Option<String>,
    pub label: Option<Label>,
}

impl From<&Pair> for IngestRecord {
    fn from(p: &Pair) -> Self {
        Self {
            id: p.id.clone(),
            doc_id: p.document.id.clone(),
            source: p.document.source,
            text: p.document.text.clone(),
            sentences: p.document.sentences.clone(),
            claim: p.claim.as_ref().map(|c| c.claim.clone()),
            label: p.claim.as_ref().map(|c| c.label),
        }
    }
}

impl From<IngestRecord> for Pair {
    fn from(r: IngestRecord) -> Self {
        let claim = match (r.claim, r.label) {
            (Some(claim), Some(label)) => Some(ClaimRecord {
                claim,
                label,
                doc_id: r.doc_id.clone(),
            }),
            _ => None,
        };
        Pair {
            id: r.id,
            document: Document {
                id: r.doc_id,
                text: r.text,
                sentences: r.sentences,
                source: r.source,
            },
            claim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactsRecord {
    pub doc_id: String,
    pub facts: Vec<AtomicFact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| Error::io(path, e))
}

/// Writes lines to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// First occurrence of each document, in pair order.
fn unique_documents(pairs: &[Pair]) -> Vec<Document> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert(p.document.id.clone()))
        .map(|p| p.document.clone())
        .collect()
}

/// A parsed `--pred` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredSpec {
    pub row: String,
    pub column: String,
    pub path: PathBuf,
}

impl PredSpec {
    pub fn parse(spec: &str) -> Self {
        match spec.split_once('=') {
            Some((label, path)) => {
                let (row, column) = label.split_once('/').unwrap_or((label, "all"));
                Self {
                    row: row.to_string(),
                    column: column.to_string(),
                    path: PathBuf::from(path),
                }
            }
            None => {
                let path = PathBuf::from(spec);
                let row = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec).to_string();
                Self {
                    row,
                    column: "all".into(),
                    path,
                }
            }
        }
    }
}

pub struct Pipeline {
    cfg: RunConfig,
    prompts: PromptSet,
    segmentation: SegmentationConfig,
    exec: Execution,
    client: OnceLock<LlmClient>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let prompts = match &cfg.prompt_dir {
            Some(dir) => PromptSet::from_dir(dir)?,
            None => PromptSet::default(),
        };
        let segmentation = match &cfg.abbrev_file {
            Some(path) => SegmentationConfig::from_abbreviation_file(path, 2)?,
            None => SegmentationConfig::default(),
        };
        fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        Ok(Self {
            cfg,
            prompts,
            segmentation,
            exec: Execution::Parallel,
            client: OnceLock::new(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn stage_path(&self, stage: Stage) -> PathBuf {
        self.out_path(&format!("{}.jsonl", stage.name()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_path("manifest.json")
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    fn write_manifest(&self, stage: Stage, record: StageRecord) -> Result<()> {
        let mut manifest = self.read_manifest()?.unwrap_or(Manifest {
            seed: self.cfg.seed,
            config: json!({}),
            stages: BTreeMap::new(),
        });
        manifest.seed = self.cfg.seed;
        manifest.config = self.cfg.recorded();
        manifest.stages.insert(stage.name().to_string(), record);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.manifest_path(), &bytes)
    }

    fn client(&self) -> Result<&LlmClient> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let (backend, cache_dir): (Box<dyn LlmBackend>, PathBuf) = match self.cfg.backend {
            BackendMode::Live => (Box::new(HttpBackend::from_env()?), self.cfg.cache_dir.clone()),
            // mock replies live apart so they can never answer a live request
            BackendMode::Mock => (
                Box::new(MockBackend::new(self.prompts.clone(), self.segmentation.clone())),
                self.cfg.cache_dir.join("mock"),
            ),
        };
        let client = LlmClient::new(backend, self.cfg.model.clone())
            .with_temperature(self.cfg.temperature)?
            .with_concurrency(self.cfg.concurrency)
            .with_cache(ResponseCache::open(cache_dir)?);
        Ok(self.client.get_or_init(|| client))
    }

    fn llm_settings(&self) -> serde_json::Value {
        json!({
            "backend": self.cfg.backend,
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
        })
    }

    fn stage_settings(&self, stage: Stage) -> Result<serde_json::Value> {
        let seg = sha256_hex(self.segmentation.abbreviations().join("\n").as_bytes());
        let file_hash = |p: &Option<PathBuf>| -> Result<Option<String>> { p.as_deref().map(hash_file).transpose() };
        Ok(match stage {
            Stage::Ingest => json!({
                "dataset": self.cfg.dataset,
                "input": file_hash(&self.cfg.input)?,
                "corpus": file_hash(&self.cfg.corpus)?,
                "claims": file_hash(&self.cfg.claims)?,
                "filter_length": self.cfg.filter_enabled(),
                "subset_size": self.cfg.subset_size,
                "seed": self.cfg.seed,
                "segmentation": seg,
            }),
            Stage::Summarize => json!({
                "llm": self.llm_settings(),
                "prompt": sha256_hex(self.prompts.summarize.raw().as_bytes()),
                "segmentation": seg,
            }),
            Stage::Decompose => json!({
                "llm": self.llm_settings(),
                "prompt": sha256_hex(self.prompts.decompose.raw().as_bytes()),
            }),
            Stage::Table => json!({
                "llm": self.llm_settings(),
                "prompt": sha256_hex(self.prompts.entail.raw().as_bytes()),
            }),
            Stage::Synth => json!({
                "proportions": self.cfg.proportions,
                "instances_per_doc": self.cfg.instances_per_doc,
                "fact_selection": self.cfg.fact_selection,
                "seed": self.cfg.seed,
            }),
            Stage::Augment => json!({ "proportions": self.cfg.proportions, "seed": self.cfg.seed }),
            Stage::Scan => json!({
                "llm": self.llm_settings(),
                "decompose": sha256_hex(self.prompts.decompose.raw().as_bytes()),
                "entail": sha256_hex(self.prompts.entail.raw().as_bytes()),
                "pred": self.cfg.pred.first().map(|s| hash_file(&PredSpec::parse(s).path)).transpose()?,
            }),
            Stage::Score => {
                let preds = self
                    .cfg
                    .pred
                    .iter()
                    .map(|s| {
                        let spec = PredSpec::parse(s);
                        Ok(json!([spec.row, spec.column, hash_file(&spec.path)?]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                json!({ "pred": preds, "gold": file_hash(&self.cfg.gold)? })
            }
        })
    }

    fn fingerprint(&self, stage: Stage) -> Result<String> {
        let mut upstream = BTreeMap::new();
        for &dep in stage.upstream() {
            let path = self.stage_path(dep);
            if !path.exists() {
                return Err(Error::Dependency {
                    stage: stage.name().into(),
                    required: dep.name().into(),
                });
            }
            upstream.insert(dep.name(), hash_file(&path)?);
        }
        let material = json!({
            "stage": stage.name(),
            "settings": self.stage_settings(stage)?,
            "upstream": upstream,
        });
        Ok(sha256_hex(material.to_string().as_bytes()))
    }

    fn is_fresh(&self, stage: Stage, fingerprint: &str) -> Result<Option<StageRecord>> {
        let Some(manifest) = self.read_manifest()? else {
            return Ok(None);
        };
        let Some(record) = manifest.stages.get(stage.name()) else {
            return Ok(None);
        };
        if record.fingerprint != fingerprint || record.outputs.is_empty() {
            return Ok(None);
        }
        for (name, hash) in &record.outputs {
            let path = self.out_path(name);
            if !path.exists() || hash_file(&path)? != *hash {
                return Ok(None);
            }
        }
        Ok(Some(record.clone()))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        self.run_stage_inner(stage, false)
    }

    fn run_stage_inner(&self, stage: Stage, force: bool) -> Result<StageOutcome> {
        let fingerprint = self.fingerprint(stage)?;
        // pair export is a side channel: always runs, never recorded
        let exporting = stage == Stage::Scan && self.cfg.export_pairs.is_some();
        if !force && !exporting {
            if let Some(record) = self.is_fresh(stage, &fingerprint)? {
                log::info!("{stage}: up to date");
                return Ok(StageOutcome {
                    stage,
                    ran: false,
                    outputs: record.outputs.keys().map(|n| self.out_path(n)).collect(),
                    count: record.count,
                    errors: record.errors,
                });
            }
        }
        log::info!("{stage}: running");
        let produced = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Summarize => self.summarize()?,
            Stage::Decompose => self.decompose()?,
            Stage::Table => self.table()?,
            Stage::Synth => self.synth()?,
            Stage::Augment => self.augment()?,
            Stage::Scan => self.scan()?,
            Stage::Score => self.score()?,
        };
        if exporting {
            return Ok(StageOutcome {
                stage,
                ran: true,
                outputs: self.cfg.export_pairs.iter().cloned().collect(),
                count: produced.count,
                errors: 0,
            });
        }
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &produced.files {
            write_atomic(&self.out_path(name), bytes)?;
            outputs.insert(name.clone(), sha256_hex(bytes));
        }
        let record = StageRecord {
            fingerprint,
            outputs,
            count: produced.count,
            errors: produced.errors,
        };
        self.write_manifest(stage, record)?;
        log::info!("{stage}: {} record(s), {} error(s)", produced.count, produced.errors);
        Ok(StageOutcome {
            stage,
            ran: true,
            outputs: produced.files.iter().map(|(n, _)| self.out_path(n)).collect(),
            count: produced.count,
            errors: produced.errors,
        })
    }

    /// Runs every main stage in order. Once a stage recomputes, everything
    /// downstream of it recomputes too.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        let mut recomputed: HashSet<Stage> = HashSet::new();
        let mut outcomes = Vec::new();
        for stage in Stage::MAIN {
            let force = stage.upstream().iter().any(|d| recomputed.contains(d));
            let outcome = self.run_stage_inner(stage, force)?;
            if outcome.ran {
                recomputed.insert(stage);
            }
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    fn load_pairs(&self) -> Result<Vec<Pair>> {
        Ok(read_jsonl::<IngestRecord>(&self.stage_path(Stage::Ingest))?
            .into_iter()
            .map(Pair::from)
            .collect())
    }

    fn ingest(&self) -> Result<Produced> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| Error::Validation(format!("{:?} dataset needs --{what}", self.cfg.dataset)))
        };
        let loaded = match self.cfg.dataset {
            DatasetKind::Pubhealth => corpus::load_pubhealth(&need(&self.cfg.input, "input")?)?,
            DatasetKind::Scifact => {
                corpus::load_scifact(&need(&self.cfg.corpus, "corpus")?, &need(&self.cfg.claims, "claims")?)?
            }
            DatasetKind::Generic => corpus::load_generic(&need(&self.cfg.input, "input")?)?,
        };
        for e in &loaded.errors {
            log::warn!("ingest line {}: {}", e.line, e.message);
        }
        let mut errors = loaded.errors.len();

        let seg = &self.segmentation;
        let segmented = par::map(self.exec, &loaded.pairs, |p| {
            let mut p = p.clone();
            p.document.segment(seg).map(|_| p)
        });
        let mut pairs = Vec::with_capacity(segmented.len());
        for r in segmented {
            match r {
                Ok(p) => pairs.push(p),
                Err(e) => {
                    log::warn!("ingest: {e}");
                    errors += 1;
                }
            }
        }
        if self.cfg.filter_enabled() {
            pairs = corpus::filter_pairs_by_length(
                pairs,
                corpus::MIN_SENTENCES_EXCLUSIVE,
                corpus::MAX_SENTENCES_EXCLUSIVE,
            )?;
        }
        if let Some(k) = self.cfg.subset_size {
            pairs = corpus::select_balanced_subset(&pairs, k, self.cfg.seed)?;
        }
        let records: Vec<IngestRecord> = pairs.iter().map(IngestRecord::from).collect();
        Ok(Produced::single(
            Stage::Ingest,
            to_jsonl(&records),
            records.len(),
            errors,
        ))
    }

    fn summarize(&self) -> Result<Produced> {
        let docs = unique_documents(&self.load_pairs()?);
        let client = self.client()?;
        let decomposer = Decomposer::new(client, &self.prompts, &self.segmentation);
        let records = par::try_map(self.exec, &docs, |d| {
            decomposer.summarize(d).map(|(s, warning)| SummaryRecord {
                doc_id: s.doc_id,
                text: s.text,
                sentences: s.sentences,
                warnings: warning.into_iter().map(|w| w.message).collect(),
            })
        })?;
        Ok(Produced::single(Stage::Summarize, to_jsonl(&records), records.len(), 0))
    }

    fn load_summaries(&self) -> Result<Vec<Summary>> {
        Ok(read_jsonl::<SummaryRecord>(&self.stage_path(Stage::Summarize))?
            .into_iter()
            .map(|r| Summary {
                doc_id: r.doc_id,
                text: r.text,
                sentences: r.sentences,
            })
            .collect())
    }

    fn decompose(&self) -> Result<Produced> {
        let summaries = self.load_summaries()?;
        let client = self.client()?;
        let decomposer = Decomposer::new(client, &self.prompts, &self.segmentation);
        let records = par::try_map(self.exec, &summaries, |s| {
            decomposer.decompose(s).map(|facts| FactsRecord {
                doc_id: s.doc_id.clone(),
                facts,
            })
        })?;
        Ok(Produced::single(Stage::Decompose, to_jsonl(&records), records.len(), 0))
    }

    fn table(&self) -> Result<Produced> {
        let docs: HashMap<String, Document> = unique_documents(&self.load_pairs()?)
            .into_iter()
            .map(|d| (d.id.clone(), d))
            .collect();
        let facts: Vec<FactsRecord> = read_jsonl(&self.stage_path(Stage::Decompose))?;
        let client = self.client()?;
        let scorer = LlmScorer::new(client, &self.prompts);
        let exec = self.exec;
        let tables = par::try_map(exec, &facts, |rec| {
            let doc = docs
                .get(&rec.doc_id)
                .ok_or_else(|| Error::Reference(format!("decomposed document {} not in ingest", rec.doc_id)))?;
            fact_table::build_table(doc, &rec.facts, &scorer, exec).map_err(|e| e.in_document(&doc.id))
        })?;
        Ok(Produced::single(Stage::Table, to_jsonl(&tables), tables.len(), 0))
    }

    fn synthesis_config(&self, proportion_pct: u32) -> SynthesisConfig {
        SynthesisConfig {
            proportion_pct,
            instances_per_document: self.cfg.instances_per_doc,
            seed: self.cfg.seed,
            fact_selection: self.cfg.fact_selection,
        }
    }

    fn synth(&self) -> Result<Produced> {
        let tables: Vec<SentenceFactTable> = read_jsonl(&self.stage_path(Stage::Table))?;
        let mut all = Vec::new();
        for &p in &self.cfg.proportions {
            all.extend(synthesis::synthesize_all(
                &tables,
                &self.synthesis_config(p),
                self.exec,
            )?);
        }
        Ok(Produced::single(Stage::Synth, to_jsonl(&all), all.len(), 0))
    }

    fn augment(&self) -> Result<Produced> {
        let pairs = self.load_pairs()?;
        let synthetic: Vec<SyntheticInstance> = read_jsonl(&self.stage_path(Stage::Synth))?;
        let single = self.cfg.proportions.len() == 1;
        let mut files = Vec::new();
        let mut count = 0;
        for &p in &self.cfg.proportions {
            let subset: Vec<SyntheticInstance> = synthetic.iter().filter(|s| s.proportion_pct == p).cloned().collect();
            let records = synthesis::build_augmented_set(&pairs, &subset, self.cfg.seed);
            count += records.len();
            let name = if single {
                "augment.jsonl".to_string()
            } else {
                format!("augment-p{p}.jsonl")
            };
            files.push((name, to_jsonl(&records)));
        }
        Ok(Produced {
            files,
            count,
            errors: 0,
        })
    }

    fn scan(&self) -> Result<Produced> {
        let docs: HashMap<String, Document> = unique_documents(&self.load_pairs()?)
            .into_iter()
            .map(|d| (d.id.clone(), d))
            .collect();
        let mut pairs = Vec::new();
        for s in self.load_summaries()? {
            let doc = docs
                .get(&s.doc_id)
                .ok_or_else(|| Error::Reference(format!("summary for unknown document {}", s.doc_id)))?;
            pairs.push((doc.clone(), s));
        }
        let client = self.client()?;
        let decomposer = Decomposer::new(client, &self.prompts, &self.segmentation);

        if let Some(target) = &self.cfg.export_pairs {
            let per_doc = par::try_map(self.exec, &pairs, |(doc, summary)| {
                let facts: Vec<String> = decomposer.decompose(summary)?.into_iter().map(|f| f.text).collect();
                Ok::<_, Error>(fact_table::cell_pairs(&doc.sentences, &facts))
            })?;
            let mut seen = HashSet::new();
            let cells: Vec<_> = per_doc
                .into_iter()
                .flatten()
                .filter(|c| seen.insert(c.id.clone()))
                .collect();
            write_atomic(target, &to_jsonl(&cells))?;
            log::info!("scan: wrote {} cell pair(s) to {}", cells.len(), target.display());
            return Ok(Produced {
                files: Vec::new(),
                count: cells.len(),
                errors: 0,
            });
        }

        let classifier;
        let llm_scorer;
        let scorer: &dyn EntailmentScorer = match self.cfg.pred.first() {
            Some(spec) => {
                classifier = PredictionScorer::from_file(&PredSpec::parse(spec).path)?;
                &classifier
            }
            None => {
                llm_scorer = LlmScorer::new(client, &self.prompts);
                &llm_scorer
            }
        };
        let batch = halluscan::batch_scan(&pairs, &decomposer as &dyn FactDecomposer, scorer, self.exec);
        for (doc_id, e) in &batch.errors {
            log::warn!("scan {doc_id}: {e}");
        }
        log::info!("scan: {} scanned, {} abnormal", batch.n_scanned, batch.n_abnormal);
        Ok(Produced::single(
            Stage::Scan,
            to_jsonl(&batch.reports),
            batch.n_scanned,
            batch.errors.len(),
        ))
    }

    fn score(&self) -> Result<Produced> {
        let gold_path = self
            .cfg
            .gold
            .as_ref()
            .ok_or_else(|| Error::Validation("score needs --gold".into()))?;
        if self.cfg.pred.is_empty() {
            return Err(Error::Validation("score needs at least one --pred".into()));
        }
        let gold = evaluation::read_gold(gold_path)?;
        let mut report = ComparisonReport::default();
        for spec in self.cfg.pred.iter().map(|s| PredSpec::parse(s)) {
            let preds = evaluation::read_predictions(&spec.path)?;
            report.insert(&spec.row, &spec.column, evaluation::score(&preds, &gold)?);
        }
        let mut json_bytes = serde_json::to_vec_pretty(&report)?;
        json_bytes.push(b'\n');
        let text = report.render_text();
        print!("{text}");
        Ok(Produced {
            files: vec![
                ("score.json".into(), json_bytes),
                ("score.txt".into(), text.into_bytes()),
            ],
            count: report.cells.len(),
            errors: 0,
        })
    }

    /// Validates every JSONL artifact present in the output directory.
    pub fn validate_outputs(&self) -> Result<BTreeMap<String, usize>> {
        let mut counts = BTreeMap::new();
        let entries = fs::read_dir(&self.cfg.out).map_err(|e| Error::io(&self.cfg.out, e))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".jsonl"))
            .collect();
        names.sort();
        for name in names {
            let stem = name.trim_end_matches(".jsonl");
            let artifact = match stem.split('-').next().unwrap_or(stem) {
                "ingest" => Artifact::Ingest,
                "summarize" => Artifact::Summarize,
                "decompose" => Artifact::Decompose,
                "table" => Artifact::Table,
                "synth" => Artifact::Synth,
                "augment" => Artifact::Augment,
                "scan" => Artifact::Scan,
                _ => continue,
            };
            counts.insert(name.clone(), schema::validate_file(artifact, &self.out_path(&name))?);
        }
        Ok(counts)
    }
}

struct Produced {
    files: Vec<(String, Vec<u8>)>,
    count: usize,
    errors: usize,
}

impl Produced {
    fn single(stage: Stage, bytes: Vec<u8>, count: usize, errors: usize) -> Self {
        Self {
            files: vec![(format!("{}.jsonl", stage.name()), bytes)],
            count,
            errors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pred_spec_forms() {
        assert_eq!(
            PredSpec::parse("10%/500=runs/a.jsonl"),
            PredSpec {
                row: "10%".into(),
                column: "500".into(),
                path: "runs/a.jsonl".into()
            }
        );
        assert_eq!(PredSpec::parse("base=p.jsonl").column, "all");
        assert_eq!(PredSpec::parse("dir/p.jsonl").row, "p");
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig {
                proportions: vec![120],
                ..ok.clone()
            },
            RunConfig {
                proportions: vec![],
                ..ok.clone()
            },
            RunConfig {
                proportions: vec![10, 10],
                ..ok.clone()
            },
            RunConfig {
                subset_size: Some(5),
                ..ok.clone()
            },
            RunConfig {
                concurrency: 0,
                ..ok.clone()
            },
            RunConfig {
                instances_per_doc: 0,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Validation(_))), "{bad:?}");
        }
    }

    #[test]
    fn toml_config_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "dataset = \"scifact\"\ncorpus = \"c.jsonl\"\nclaims = \"k.jsonl\"\nproportions = [0, 50]\nseed = 7\nfact_selection = \"balance-target\"\n").unwrap();
        let cfg = RunConfig::from_toml_file(&path).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::Scifact);
        assert_eq!(cfg.proportions, vec![0, 50]);
        assert_eq!(cfg.fact_selection, FactSelection::BalanceTarget);
        assert_eq!(cfg.model, DEFAULT_MODEL);
        fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(RunConfig::from_toml_file(&path).is_err());
    }

    #[test]
    fn recorded_config_omits_locations() {
        let v = RunConfig::default().recorded();
        assert!(v.get("out").is_none());
        assert!(v.get("cache_dir").is_none());
        assert!(v.get("seed").is_some());
    }

    #[test]
    fn ingest_record_round_trip() {
        let mut doc = Document::new("d", "One. Two.", Source::Generic);
        doc.segment(&SegmentationConfig::default()).unwrap();
        let pair = Pair {
            id: "p".into(),
            document: doc,
            claim: Some(ClaimRecord {
                claim: "c".into(),
                label: Label::False,
                doc_id: "d".into(),
            }),
        };
        let rec = IngestRecord::from(&pair);
        let line = serde_json::to_string(&rec).unwrap();
        schema::validate_line(Artifact::Ingest, &line).unwrap();
        assert_eq!(Pair::from(rec), pair);
    }
}

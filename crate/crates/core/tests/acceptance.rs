//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line before
//! asserting, so `cargo test --test acceptance -- --nocapture` reads as a
//! checklist.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factforge::corpus::{self, ClaimRecord, Document, Label, Pair, Source};
use factforge::decomposition::{AtomicFact, FactDecomposer, Summary};
use factforge::evaluation::consistency_check;
use factforge::fact_table::{cell_pair_id, cell_pairs, LexicalScorer, PredictionScorer, SentenceFactTable};
use factforge::halluscan::{self, Verdict};
use factforge::par::Execution;
use factforge::pipeline::{BackendMode, DatasetKind, Pipeline, RunConfig, Stage};
use factforge::schema::{self, Artifact};
use factforge::segmenter::SegmentationConfig;
use factforge::synthesis::{self, sample_size, FactSelection, SynthesisConfig};
use factforge::Result;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn verdict(name: &str, ok: bool, detail: &str) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn within(budget: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (took < budget, format!("{:.2?} (budget {budget:?})", took))
}

#[test]
fn labeling_rule_matches_brute_force_or() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut tables = 0;
    let mut instances = 0;
    let mut mismatches = Vec::new();
    while tables < 1500 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let density: f64 = rng.random_range(0.0..1.0);
        let matrix: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_bool(density)).collect())
            .collect();
        let table = SentenceFactTable::new(
            format!("t{tables}"),
            (0..n).map(|i| format!("Sentence {i}.")).collect(),
            (0..m).map(|j| format!("Fact {j}.")).collect(),
            matrix.clone(),
            "random",
        )
        .unwrap();
        let cfg = SynthesisConfig {
            proportion_pct: rng.random_range(1..=100),
            instances_per_document: rng.random_range(1..=4),
            seed: rng.random(),
            fact_selection: if rng.random_bool(0.5) {
                FactSelection::Uniform
            } else {
                FactSelection::BalanceTarget
            },
        };
        for inst in synthesis::synthesize(&table, &cfg).unwrap() {
            let idx = &inst.selected_sentence_indices;
            let mut expected = false;
            for &i in idx {
                if matrix[i][inst.fact_index] {
                    expected = true;
                }
            }
            let shape_ok = idx.len() == sample_size(n, cfg.proportion_pct) && idx.windows(2).all(|w| w[0] < w[1]);
            if inst.label.as_bool() != expected || !shape_ok {
                mismatches.push(inst.id.clone());
            }
            instances += 1;
        }
        tables += 1;
    }
    let (fast, timing) = within(Duration::from_secs(10), started);
    verdict(
        "labeling oracle",
        mismatches.is_empty() && fast,
        &format!(
            "{tables} tables, {instances} instances, {} mismatches, {timing}",
            mismatches.len()
        ),
    );
}

#[derive(serde::Deserialize)]
struct Table2Row {
    proportion_pct: u32,
    column: String,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[test]
fn reported_results_are_internally_consistent() {
    let started = Instant::now();
    let mut reader = csv::Reader::from_path(fixture("table2.csv")).unwrap();
    let rows: Vec<Table2Row> = reader.deserialize().collect::<std::result::Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 44, "transcription must hold 11 proportions x 4 columns");
    let triples: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.precision, r.recall, r.f1)).collect();
    let violations = consistency_check(&triples);
    for v in &violations {
        let r = &rows[v.row];
        println!(
            "     {}% / {}: P={} R={} F={} but 2PR/(P+R)={:.4} (gap {:.4})",
            r.proportion_pct,
            r.column,
            v.precision,
            v.recall,
            v.reported_f1,
            v.implied_f1,
            v.gap()
        );
    }
    let (fast, timing) = within(Duration::from_secs(1), started);
    verdict(
        "table consistency",
        violations.is_empty() && fast,
        &format!(
            "{} of {} triples outside 0.001, {timing}",
            violations.len(),
            triples.len()
        ),
    );
}

#[test]
fn worked_consistency_examples_hold() {
    let v = consistency_check(&[(0.949, 0.656, 0.776), (0.891, 0.780, 0.831)]);
    verdict(
        "table consistency examples",
        v.is_empty(),
        &format!("{} violation(s) among the 2 worked examples", v.len()),
    );
}

fn run_all_cli(out: &Path, cache: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_factforge"))
        .arg("run-all")
        .args(["--dataset", "generic", "--backend", "mock", "--seed", "7"])
        .args(["--proportion", "30", "--proportion", "100", "--instances-per-doc", "2"])
        .arg("--input")
        .arg(fixture("five_docs.jsonl"))
        .arg("--out")
        .arg(out)
        .arg("--cache-dir")
        .arg(cache)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success(), "run-all exited with {status}");
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn run_all_is_byte_deterministic() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all_cli(&a, &tmp.path().join("cache-a"));
    run_all_cli(&b, &tmp.path().join("cache-b"));
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    let expected = [
        "ingest.jsonl",
        "summarize.jsonl",
        "decompose.jsonl",
        "table.jsonl",
        "synth.jsonl",
        "augment-p30.jsonl",
        "augment-p100.jsonl",
        "manifest.json",
    ];
    let present = expected.iter().all(|f| fa.contains_key(*f));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let synth_lines = fa
        .get("synth.jsonl")
        .map_or(0, |b| b.iter().filter(|&&c| c == b'\n').count());
    let (fast, timing) = within(Duration::from_secs(30), started);
    verdict(
        "run-all determinism",
        present && differing.is_empty() && fa.len() == fb.len() && synth_lines > 0 && fast,
        &format!(
            "{} files, {} differing, {synth_lines} synthetic instances, all artifacts present: {present}, {timing}",
            fa.len(),
            differing.len()
        ),
    );
}

struct FixedFacts(Vec<&'static str>);

impl FactDecomposer for FixedFacts {
    fn decompose(&self, _: &Summary) -> Result<Vec<AtomicFact>> {
        Ok(self
            .0
            .iter()
            .enumerate()
            .map(|(id, t)| AtomicFact {
                id,
                text: t.to_string(),
                source_summary_sentence: 0,
            })
            .collect())
    }
}

fn doc_with(id: &str, sentences: &[&str]) -> Document {
    Document::from_sentences(id, sentences.iter().map(|s| s.to_string()).collect(), Source::Pubhealth)
}

fn summary_of(doc_id: &str, text: &str) -> Summary {
    Summary {
        doc_id: doc_id.into(),
        text: text.into(),
        sentences: vec![text.into()],
    }
}

/// Scorer answering from an explicit support matrix.
fn matrix_scorer(doc: &Document, facts: &[&str], matrix: &[Vec<bool>]) -> PredictionScorer {
    let mut verdicts = HashMap::new();
    for (s, row) in doc.sentences.iter().zip(matrix) {
        for (f, &v) in facts.iter().zip(row) {
            verdicts.insert(cell_pair_id(s, f), v);
        }
    }
    PredictionScorer::new("fixture", verdicts)
}

#[test]
fn hallucination_scan_flags_exactly_the_all_false_columns() {
    // photo-of-paw-prints case: the summary appends a cause for mange that
    // no document sentence states
    let doc = doc_with(
        "paws",
        &[
            "A photo of an unknown animal's paw prints has circulated online for years.",
            "In 2018 it was reshared with claims the creature was caught on a trail camera in Alabama.",
            "Those claims are false, since the photo has been online since at least 2015.",
            "The same photo was attached to stories set in India, Brazil and Hawaii.",
            "The prints most likely belong to a dog suffering from mange.",
        ],
    );
    let facts = vec![
        "A photo of an unknown animal's paw prints has circulated online.",
        "Claims about the photo's origins are false.",
        "The photo likely shows a dog suffering from mange.",
        "Mange is a skin disease caused by Demodex mites.",
    ];
    let support = vec![
        vec![true, false, false, false],
        vec![false, false, false, false],
        vec![false, true, false, false],
        vec![false, false, false, false],
        vec![false, false, true, false],
    ];
    let summary = summary_of("paws", &facts.join(" "));
    let decomposer = FixedFacts(facts.clone());
    let report = halluscan::scan(
        &doc,
        &summary,
        &decomposer,
        &matrix_scorer(&doc, &facts, &support),
        Execution::Parallel,
    )
    .unwrap();
    let flagged: Vec<usize> = report.flagged.iter().map(|f| f.fact_index).collect();
    let injected_ok = flagged == vec![3] && report.verdict == Verdict::Abnormal && report.flagged[0].fact == facts[3];

    // the lexical scorer reaches the same verdict on this fixture
    let lexical = halluscan::scan(&doc, &summary, &decomposer, &LexicalScorer, Execution::Sequential).unwrap();
    let lexical_flags: Vec<usize> = lexical.flagged.iter().map(|f| f.fact_index).collect();

    // randomized support matrices against a brute-force column scan
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut random_ok = 0;
    let trials = 300;
    for t in 0..trials {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=5);
        let sentences: Vec<String> = (0..n).map(|i| format!("Sentence {i} of case {t}.")).collect();
        let fact_texts: Vec<&'static str> = ["F0.", "F1.", "F2.", "F3.", "F4."][..m].to_vec();
        let matrix: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_bool(0.25)).collect())
            .collect();
        let d = Document::from_sentences(format!("r{t}"), sentences, Source::Generic);
        let scorer = matrix_scorer(&d, &fact_texts, &matrix);
        let r = halluscan::scan(
            &d,
            &summary_of(&d.id, "x"),
            &FixedFacts(fact_texts.clone()),
            &scorer,
            Execution::Parallel,
        )
        .unwrap();
        let expected: Vec<usize> = (0..m).filter(|&c| (0..n).all(|row| !matrix[row][c])).collect();
        let got: Vec<usize> = r.flagged.iter().map(|f| f.fact_index).collect();
        let verdict_ok = (r.verdict == Verdict::Abnormal) == !expected.is_empty();
        if got == expected && verdict_ok {
            random_ok += 1;
        }
    }
    verdict(
        "hallucination scan",
        injected_ok && lexical_flags == vec![3] && random_ok == trials,
        &format!(
            "injected fixture flagged {flagged:?} (lexical {lexical_flags:?}), {random_ok}/{trials} random matrices exact"
        ),
    );
}

#[test]
fn length_filter_boundaries() {
    let cfg = SegmentationConfig::default();
    let make = |n: usize| {
        let text: Vec<String> = (0..n).map(|i| format!("This is sentence number {i}.")).collect();
        let mut d = Document::new(format!("n{n}"), text.join(" "), Source::Pubhealth);
        d.segment(&cfg).unwrap();
        assert_eq!(d.sentences.len(), n);
        d
    };
    let docs: Vec<Document> = [3, 4, 39, 40].into_iter().map(make).collect();
    let kept: Vec<String> =
        corpus::filter_by_length(docs, corpus::MIN_SENTENCES_EXCLUSIVE, corpus::MAX_SENTENCES_EXCLUSIVE)
            .unwrap()
            .into_iter()
            .map(|d| d.id)
            .collect();
    verdict(
        "length filter",
        kept == ["n4", "n39"],
        &format!("kept {kept:?} of [n3, n4, n39, n40]"),
    );
}

fn labeled_corpus(n_true: usize, n_false: usize) -> Vec<Pair> {
    (0..n_true + n_false)
        .map(|i| {
            let label = if i < n_true { Label::True } else { Label::False };
            let id = format!("c{i}");
            Pair {
                id: id.clone(),
                document: Document::from_sentences(id.clone(), vec![format!("Doc {i}.")], Source::Pubhealth),
                claim: Some(ClaimRecord {
                    claim: format!("Claim {i}."),
                    label,
                    doc_id: id,
                }),
            }
        })
        .collect()
}

#[test]
fn balanced_subset_is_exactly_even() {
    let mut details = Vec::new();
    let mut ok = true;
    for (k, n_true, n_false) in [(4, 3, 3), (4, 9, 2), (500, 700, 400), (500, 250, 250)] {
        for seed in [0, 7] {
            let subset = corpus::select_balanced_subset(&labeled_corpus(n_true, n_false), k, seed).unwrap();
            let t = subset.iter().filter(|p| p.label() == Some(Label::True)).count();
            let f = subset.iter().filter(|p| p.label() == Some(Label::False)).count();
            let mut ids: Vec<&str> = subset.iter().map(|p| p.id.as_str()).collect();
            ids.sort();
            ids.dedup();
            ok &= t == k / 2 && f == k / 2 && ids.len() == k;
            details.push(format!("k={k} from {n_true}/{n_false} seed {seed}: ({t}, {f})"));
        }
    }
    verdict("balanced subset", ok, &details.join("; "));
}

fn run_config(dataset: DatasetKind, out: &Path, cache: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        dataset,
        backend: BackendMode::Mock,
        seed: 7,
        proportions: vec![0, 50],
        out: out.to_path_buf(),
        cache_dir: cache.to_path_buf(),
        ..RunConfig::default()
    };
    match dataset {
        DatasetKind::Generic => cfg.input = Some(fixture("five_docs.jsonl")),
        DatasetKind::Pubhealth => cfg.input = Some(fixture("pubhealth.tsv")),
        DatasetKind::Scifact => {
            cfg.corpus = Some(fixture("scifact_corpus.jsonl"));
            cfg.claims = Some(fixture("scifact_claims.jsonl"));
        }
    }
    cfg
}

fn validate_dir(dir: &Path, seen: &mut Vec<String>) -> std::result::Result<usize, String> {
    let mut lines = 0;
    for (name, _) in dir_bytes(dir) {
        let Some(stem) = name.strip_suffix(".jsonl") else {
            continue;
        };
        let artifact = match stem.split('-').next().unwrap() {
            "ingest" => Artifact::Ingest,
            "summarize" => Artifact::Summarize,
            "decompose" => Artifact::Decompose,
            "table" => Artifact::Table,
            "synth" => Artifact::Synth,
            "augment" => Artifact::Augment,
            "scan" => Artifact::Scan,
            "pairs" => Artifact::CellPairs,
            "predictions" => Artifact::Predictions,
            other => return Err(format!("unexpected artifact {other}")),
        };
        lines += schema::validate_file(artifact, &dir.join(&name)).map_err(|e| e.to_string())?;
        seen.push(format!("{}/{name}", dir.file_name().unwrap().to_string_lossy()));
    }
    Ok(lines)
}

#[test]
fn every_emitted_line_matches_its_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let mut seen = Vec::new();
    let mut lines = 0;
    let mut failures = Vec::new();
    for dataset in [DatasetKind::Generic, DatasetKind::Pubhealth, DatasetKind::Scifact] {
        let out = tmp.path().join(format!("{dataset:?}").to_lowercase());
        let mut cfg = run_config(dataset, &out, &cache);
        Pipeline::new(cfg.clone()).unwrap().run_all().unwrap();

        // classifier round trip: export cell pairs, answer them, scan with the answers
        let pairs_path = out.join("pairs.jsonl");
        cfg.export_pairs = Some(pairs_path.clone());
        Pipeline::new(cfg.clone()).unwrap().run_stage(Stage::Scan).unwrap();
        let mut preds = String::new();
        for line in fs::read_to_string(&pairs_path).unwrap().lines() {
            let cell: serde_json::Value = serde_json::from_str(line).unwrap();
            let yes = factforge::llm::mock::entails(cell["text"].as_str().unwrap(), cell["claim"].as_str().unwrap());
            preds.push_str(
                &serde_json::json!({
                    "id": cell["id"],
                    "predicted": if yes { "true" } else { "false" },
                    "p_true": if yes { 0.9 } else { 0.1 },
                })
                .to_string(),
            );
            preds.push('\n');
        }
        fs::write(out.join("predictions.jsonl"), preds).unwrap();
        cfg.export_pairs = None;
        cfg.pred = vec![out.join("predictions.jsonl").display().to_string()];
        Pipeline::new(cfg).unwrap().run_stage(Stage::Scan).unwrap();

        match validate_dir(&out, &mut seen) {
            Ok(n) => lines += n,
            Err(e) => failures.push(e),
        }
    }
    let needed = [
        "ingest",
        "summarize",
        "decompose",
        "table",
        "synth",
        "augment-p0",
        "augment-p50",
        "scan",
        "pairs",
        "predictions",
    ];
    let covered = needed
        .iter()
        .all(|n| seen.iter().any(|s| s.ends_with(&format!("/{n}.jsonl"))));
    verdict(
        "schema validation",
        failures.is_empty() && covered && lines > 0,
        &format!(
            "{lines} lines across {} files, all kinds covered: {covered}, failures: {failures:?}",
            seen.len()
        ),
    );
}

#[test]
fn cell_pair_export_matches_table_cells() {
    // the pair file a classifier answers carries one line per distinct cell
    let sentences = vec!["A b.".to_string(), "C d.".to_string()];
    let facts = vec!["X.".to_string(), "Y.".to_string(), "X.".to_string()];
    let cells = cell_pairs(&sentences, &facts);
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c.id == cell_pair_id(&c.text, &c.claim)));
}

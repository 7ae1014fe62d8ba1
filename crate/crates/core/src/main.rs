use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use factforge::pipeline::{BackendMode, DatasetKind, Pipeline, RunConfig, Stage};
use factforge::synthesis::FactSelection;

#[derive(Parser)]
#[command(
    name = "factforge",
    version,
    about = "Entailment-table claim synthesis and summary scanning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load and segment a dataset.
    Ingest,
    /// Summarize every ingested document.
    Summarize,
    /// Split summaries into atomic facts.
    Decompose,
    /// Fill sentence-fact entailment tables.
    Table,
    /// Sample synthetic claim/text pairs.
    Synth,
    /// Merge originals and synthetics into a training set.
    Augment,
    /// Flag summaries containing unsupported facts.
    Scan,
    /// Score prediction files against gold labels.
    Score,
    /// ingest → summarize → decompose → table → synth → augment.
    RunAll,
}

#[derive(Args)]
struct Opts {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendMode>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[arg(long, global = true)]
    prompt_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    abbrev_file: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    dataset: Option<DatasetKind>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    claims: Option<PathBuf>,
    /// Force the 3 < sentences < 40 filter on or off.
    #[arg(long, global = true)]
    filter_length: Option<bool>,
    #[arg(long, global = true)]
    subset_size: Option<usize>,

    /// Percentage of sentences per synthetic text; repeatable.
    #[arg(long = "proportion", global = true)]
    proportions: Vec<u32>,
    #[arg(long, global = true)]
    instances_per_doc: Option<usize>,
    #[arg(long, global = true, value_enum)]
    fact_selection: Option<FactSelection>,

    /// `PATH`, `ROW=PATH` or `ROW/COLUMN=PATH`; repeatable.
    #[arg(long, global = true)]
    pred: Vec<String>,
    #[arg(long, global = true)]
    gold: Option<PathBuf>,
    #[arg(long, global = true)]
    export_pairs: Option<PathBuf>,
}

impl Opts {
    fn into_config(self) -> factforge::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { cfg.$field = v; } )* };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => { $( if self.$field.is_some() { cfg.$field = self.$field; } )* };
        }
        set!(
            out,
            seed,
            cache_dir,
            backend,
            model,
            temperature,
            concurrency,
            dataset,
            instances_per_doc,
            fact_selection
        );
        set_opt!(
            prompt_dir,
            abbrev_file,
            input,
            corpus,
            claims,
            filter_length,
            subset_size,
            gold,
            export_pairs
        );
        if !self.proportions.is_empty() {
            cfg.proportions = self.proportions;
        }
        if !self.pred.is_empty() {
            cfg.pred = self.pred;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> factforge::Result<()> {
    let cfg = cli.opts.into_config()?;
    let pipeline = Pipeline::new(cfg)?;
    let stage = match cli.command {
        Command::RunAll => {
            for o in pipeline.run_all()? {
                println!(
                    "{:<10} {:<8} {} record(s)",
                    o.stage,
                    if o.ran { "ran" } else { "cached" },
                    o.count
                );
            }
            return Ok(());
        }
        Command::Ingest => Stage::Ingest,
        Command::Summarize => Stage::Summarize,
        Command::Decompose => Stage::Decompose,
        Command::Table => Stage::Table,
        Command::Synth => Stage::Synth,
        Command::Augment => Stage::Augment,
        Command::Scan => Stage::Scan,
        Command::Score => Stage::Score,
    };
    let o = pipeline.run_stage(stage)?;
    if stage != Stage::Score {
        println!(
            "{:<10} {:<8} {} record(s)",
            o.stage,
            if o.ran { "ran" } else { "cached" },
            o.count
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

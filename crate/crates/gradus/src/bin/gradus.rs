//! Command-line entry point for the gradus pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradus::error::Error;
use gradus::eval::{EvalReport, GridReport};
use gradus::pipeline::{
    make_synthetic_corpus, run_stages, PipelineConfig, RunOptions, Stage,
};

#[derive(Parser)]
#[command(name = "gradus", version, about = "Graded code-search supervision pipeline")]
struct Cli {
    /// Configuration file (defaults to ./gradus.toml when present).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Re-verify recorded output hashes before skipping a stage.
    #[arg(long, global = true)]
    strict: bool,

    /// Force the built-in backends; never touch the network.
    #[arg(long, global = true)]
    offline: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the corpus directory and extract function units.
    Ingest,
    /// Generate one natural-language query per function.
    Docgen,
    /// Mine within-repository negatives into query groups.
    Mine,
    /// Attach similarity labels to every mined pair.
    Annotate,
    /// Select suspect negatives, adjudicate them, and adjust labels.
    Refine,
    /// Train the encoder on refined pairs.
    Train,
    /// Rank held-out queries and report retrieval metrics.
    Eval,
    /// Sweep the label-adjustment step size and report the best cell.
    Grid,
    /// Project function embeddings to 2-D coordinates.
    Mds,
    /// Write the bundled synthetic corpus to disk.
    SynthCorpus {
        /// Destination directory (defaults to the configured corpus_dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of repositories (defaults to the configured value).
        #[arg(long)]
        repos: Option<usize>,
        /// Functions per repository (defaults to the configured value).
        #[arg(long)]
        funcs_per_repo: Option<usize>,
    },
    /// Run every stage in order, synthesizing a corpus if none exists.
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// One parseable line per failure: `<code>:<detail>`.
fn error_line(e: &Error) -> String {
    match e {
        Error::MissingInput(path) => format!("missing_input:{}", path.display()),
        other => format!("{}:{other}", other.code()),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let default_path = Path::new("gradus.toml");
            if default_path.is_file() {
                PipelineConfig::load(default_path)?
            } else {
                PipelineConfig::default()
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let opts = RunOptions { strict: cli.strict, offline: cli.offline };

    let stages: &[Stage] = match &cli.command {
        Command::Ingest => &[Stage::Ingest],
        Command::Docgen => &[Stage::Docgen],
        Command::Mine => &[Stage::Mine],
        Command::Annotate => &[Stage::Annotate],
        Command::Refine => &[Stage::Refine],
        Command::Train => &[Stage::Train],
        Command::Eval => &[Stage::Eval],
        Command::Grid => &[Stage::Grid],
        Command::Mds => &[Stage::Mds],
        Command::SynthCorpus { out, repos, funcs_per_repo } => {
            let dest = out.clone().unwrap_or_else(|| cfg.corpus_dir.clone());
            let stats = make_synthetic_corpus(
                &dest,
                repos.unwrap_or(cfg.synth.repos),
                funcs_per_repo.unwrap_or(cfg.synth.funcs_per_repo),
                cfg.seed,
            )?;
            println!(
                "synthesized {} repositories, {} files, {} functions at {}",
                stats.repos,
                stats.files,
                stats.functions,
                dest.display()
            );
            return Ok(());
        }
        Command::All => {
            if !cfg.corpus_dir.is_dir() {
                log::info!(
                    "corpus directory {} not found; synthesizing one",
                    cfg.corpus_dir.display()
                );
                make_synthetic_corpus(
                    &cfg.corpus_dir,
                    cfg.synth.repos,
                    cfg.synth.funcs_per_repo,
                    cfg.seed,
                )?;
            }
            &Stage::ALL
        }
    };

    let outcomes = run_stages(&cfg, stages, opts)?;
    for o in &outcomes {
        println!("stage {}: {}", o.stage, if o.skipped { "skipped (up to date)" } else { "ran" });
    }
    if outcomes.iter().any(|o| o.stage == Stage::Eval) {
        print_eval_summary(&cfg)?;
    }
    if outcomes.iter().any(|o| o.stage == Stage::Grid) {
        print_grid_summary(&cfg)?;
    }
    Ok(())
}

fn print_eval_summary(cfg: &PipelineConfig) -> Result<(), Error> {
    let path = cfg.eval_report_path();
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    println!("evaluation summary");
    println!("  queries     {:>10}", report.query_count);
    println!("  candidates  {:>10}", report.candidate_count);
    println!("  k_cutoff    {:>10}", report.k_cutoff);
    println!("  mrr         {:>10.4}", report.mrr);
    println!("  mrr%        {:>10.2}", report.mrr_percent);
    println!("  map         {:>10.4}", report.map);
    Ok(())
}

fn print_grid_summary(cfg: &PipelineConfig) -> Result<(), Error> {
    let path = cfg.grid_report_path();
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let report: GridReport =
        serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    println!("grid summary (label-adjustment step sweep)");
    println!("  {:>8}  {:>8}  {:>8}  {:>9}", "delta_s", "mrr", "map", "adjusted");
    for row in &report.rows {
        match (&row.error, row.mrr, row.map, row.adjusted_pairs) {
            (Some(err), ..) => println!("  {:>8}  failed: {err}", row.delta_s),
            (None, Some(mrr), Some(map), Some(adj)) => {
                println!("  {:>8}  {:>8.4}  {:>8.4}  {:>9}", row.delta_s, mrr, map, adj)
            }
            _ => println!("  {:>8}  (incomplete row)", row.delta_s),
        }
    }
    match (report.best_delta_s, report.best_mrr) {
        (Some(d), Some(m)) => println!("  best: delta_s {d} (mrr {m:.4})"),
        _ => println!("  best: none (all cells failed)"),
    }
    Ok(())
}

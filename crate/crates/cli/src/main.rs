//! Command-line driver for the forecastability pipeline.
//!
//! `run` executes all four stages with artifact caching; the other
//! subcommands execute one stage against an existing artifact
//! directory, so a corpus can be inspected or re-classified without
//! recomputing everything upstream. Exit codes: 0 success, 2
//! configuration error, 3 data or artifact error, 4 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forecastability::features::FeatureFamily;
use forecastability::ingest::read_corpus_archive;
use forecastability::pipeline::{
    load_config, load_feature_matrices, load_forecast_reports, load_labeled_matrices,
    materialize_corpus, run_all, stage_classify, stage_features, stage_forecast, stage_label,
    InputSpec, PipelineConfig, PipelineError, CORPUS_DIR, RUN_MANIFEST_FILE,
};

#[derive(Debug, Parser)]
#[command(
    name = "forecastability",
    version,
    about = "Label buildings with their best day-ahead forecaster, then learn to predict that label from series features"
)]
struct Cli {
    /// JSON configuration file (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured global seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Override the configured artifact directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Restrict classification to one feature family.
    #[arg(long, global = true, value_enum, default_value_t = FamilyArg::All)]
    family: FamilyArg,

    /// Worker threads for per-building stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Parse, clean, and archive a meter/weather CSV corpus.
    Ingest,
    /// Generate and archive the synthetic corpus.
    Synth,
    /// Backtest all four forecasters per building.
    Forecast,
    /// Extract the three per-building feature matrices.
    Features,
    /// Label feature rows with each building's best forecaster.
    Label,
    /// Split, tune, fit, and evaluate the selector forest.
    Classify,
    /// Run every stage in order with artifact caching.
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Informed,
    Agnostic,
    Combined,
    All,
}

impl FamilyArg {
    fn to_family(self) -> Option<FeatureFamily> {
        match self {
            FamilyArg::Informed => Some(FeatureFamily::DomainInformed),
            FamilyArg::Agnostic => Some(FeatureFamily::DomainAgnostic),
            FamilyArg::Combined => Some(FeatureFamily::Combined),
            FamilyArg::All => None,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Config(_) => 2,
        PipelineError::Io(_) | PipelineError::Json(_) | PipelineError::Ingest(_) => 3,
        PipelineError::StageFailed { .. } => 4,
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(family) = cli.family.to_family() {
        config.families = vec![family];
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("cannot configure {jobs} worker threads: {e}")))?;
    }
    let config = resolve_config(cli)?;
    let out = config.out_dir.clone();

    match cli.command {
        Command::Ingest => {
            if matches!(config.input, InputSpec::Synthetic(_)) {
                return Err(PipelineError::Config(
                    "config input is synthetic; use the synth subcommand".into(),
                ));
            }
            let (corpus, _, _, cached) = materialize_corpus(&config, &out)?;
            println!(
                "corpus: {} buildings -> {} ({})",
                corpus.len(),
                out.join(CORPUS_DIR).display(),
                if cached { "cached" } else { "ingested" }
            );
        }
        Command::Synth => {
            if matches!(config.input, InputSpec::Files { .. }) {
                return Err(PipelineError::Config(
                    "config input is a file corpus; use the ingest subcommand".into(),
                ));
            }
            let (corpus, _, _, cached) = materialize_corpus(&config, &out)?;
            println!(
                "corpus: {} buildings -> {} ({})",
                corpus.len(),
                out.join(CORPUS_DIR).display(),
                if cached { "cached" } else { "generated" }
            );
        }
        Command::Forecast => {
            let (corpus, _) = read_corpus_archive(&out.join(CORPUS_DIR))?;
            let (reports, _) = stage_forecast(&config, &corpus, &out)?;
            println!(
                "forecast: {} of {} buildings scored -> {}",
                reports.len(),
                corpus.len(),
                out.join("forecast").display()
            );
        }
        Command::Features => {
            let (corpus, _) = read_corpus_archive(&out.join(CORPUS_DIR))?;
            let (matrices, _) = stage_features(&corpus, &out)?;
            for (family, matrix) in &matrices {
                println!(
                    "features/{family}: {} rows x {} columns",
                    matrix.n_rows(),
                    matrix.n_cols()
                );
            }
        }
        Command::Label => {
            let reports = load_forecast_reports(&out)?;
            let matrices = load_feature_matrices(&out)?;
            let (_, summary, _) = stage_label(&reports, &matrices, &out)?;
            println!("labels: {} buildings", summary.total);
            for (kind, count) in &summary.counts {
                println!("  {:<12} {count}", kind.name());
            }
        }
        Command::Classify => {
            let labeled = load_labeled_matrices(&out)?;
            let (summary, _) = stage_classify(&config, &labeled, &out)?;
            print_classify(&summary);
        }
        Command::Run => {
            let manifest = run_all(&config)?;
            for stage in &manifest.stages {
                println!(
                    "{:<9} {}  {:>3} artifacts",
                    stage.stage,
                    if stage.cached { "cached" } else { "fresh " },
                    stage.artifacts.len()
                );
            }
            println!("manifest -> {}", out.join(RUN_MANIFEST_FILE).display());
        }
    }
    Ok(())
}

fn print_classify(summary: &forecastability::pipeline::ClassifySummary) {
    for (family, outcome) in &summary.families {
        println!(
            "classify/{family}: test accuracy {:.3} (baseline {:.3}, cv {:.3}), {} train / {} test",
            outcome.test_accuracy,
            outcome.majority_baseline,
            outcome.cv_mean_accuracy,
            outcome.train_rows,
            outcome.test_rows
        );
    }
}

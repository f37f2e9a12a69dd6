//! `cohortforge`: command-line driver for the pipeline stages and the
//! synthetic corpus generator. Progress goes to stderr; results only to
//! files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohortforge_core::pipeline::{run_synth, Pipeline, PipelineConfig, Stage};
use cohortforge_core::synthgen::{plant_signal, CategoryRates, GenConfig, Preset};
use cohortforge_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cohortforge", version, about = "Build enriched, labeled AF-progression datasets from reports and coded EHR tables")]
struct Cli {
    /// Pipeline config (TOML). Without one, defaults apply with paths
    /// relative to the working directory.
    #[arg(long, global = true, env = "COHORTFORGE_CONFIG")]
    config: Option<PathBuf>,

    /// Input corpus directory (overrides the config).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    /// Output directory (overrides the config). For `synth`, where the
    /// corpus is written.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for per-patient work.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Select and verify AF-onset patients (cohort.csv).
    Cohort,
    /// Report vectors at onset (report_vectors.csv).
    ExtractReports,
    /// Structured vectors at onset (structured_vectors.csv).
    ExtractStructured,
    /// Merge both vectors (enriched.csv, conflicts.jsonl).
    Merge,
    /// Silver progression labels (labels.csv).
    Label,
    /// CHA2DS2-VASc, HATCH and APPLE (scores.csv).
    Score,
    /// Export train/test splits and fit the baseline (model.json).
    TrainBaseline,
    /// Held-out metrics and oracle checks (eval.json).
    Evaluate,
    /// Missingness and positive-rate comparison (enrichment.csv/json).
    Report,
    /// Every stage in order.
    All,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Start from a published split shape: train-silver, train-gold, test.
    #[arg(long)]
    preset: Option<Preset>,
    /// Labeled cohort patients.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    positive_rate: Option<f64>,
    /// Structured missingness: one rate, or `lab=0.5,history=0.3,...`.
    #[arg(long)]
    missingness: Option<CategoryRates>,
    /// Probability that a fact appears in the onset report.
    #[arg(long)]
    coverage: Option<f64>,
    /// Probability that a follow-up report is lost.
    #[arg(long)]
    dropout: Option<f64>,
    /// Probability that an absent fact is written as a negation.
    #[arg(long)]
    negation_rate: Option<f64>,
    /// Label-feature association strength in [0, 1].
    #[arg(long)]
    signal_strength: Option<f64>,
    /// No missingness, full coverage, no dropout.
    #[arg(long)]
    zero_noise: bool,
}

impl SynthArgs {
    fn gen_config(&self) -> GenConfig {
        let mut c = self.preset.map(GenConfig::preset).unwrap_or_default();
        if self.zero_noise {
            c = c.zero_noise();
        }
        if let Some(n) = self.n {
            c.n_patients = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(p) = self.positive_rate {
            c.positive_rate = p;
        }
        if let Some(m) = self.missingness {
            c.structured_missingness = m;
        }
        if let Some(p) = self.coverage {
            c.report_coverage = p;
        }
        if let Some(p) = self.dropout {
            c.report_dropout_rate = p;
        }
        if let Some(p) = self.negation_rate {
            c.negation_rate = p;
        }
        match self.signal_strength {
            Some(s) => plant_signal(c, s),
            None => c,
        }
    }
}

fn pipeline(cli: &Cli) -> Result<Pipeline> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    if let Some(d) = &cli.out_dir {
        config.out_dir = d.clone();
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    Pipeline::new(config)
}

fn run(cli: &Cli) -> Result<()> {
    let stage = match &cli.command {
        Command::Synth(args) => {
            let gen = args.gen_config();
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("synth"));
            if cli.jobs == Some(0) {
                return Err(Error::InvalidConfig("jobs must be positive".into()));
            }
            let corpus = run_synth(&gen, &dir, cli.jobs)?;
            log::info!(
                "wrote {} patients and {} reports to {}",
                corpus.truth.len(),
                corpus.reports.len(),
                dir.display()
            );
            return Ok(());
        }
        Command::All => return pipeline(cli)?.run_all(),
        Command::Cohort => Stage::Cohort,
        Command::ExtractReports => Stage::ExtractReports,
        Command::ExtractStructured => Stage::ExtractStructured,
        Command::Merge => Stage::Merge,
        Command::Label => Stage::Label,
        Command::Score => Stage::Score,
        Command::TrainBaseline => Stage::TrainBaseline,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
    };
    pipeline(cli)?.run(stage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        (false, _) => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                log::debug!("caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

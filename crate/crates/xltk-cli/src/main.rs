use clap::{Parser, Subcommand};
use std::path::PathBuf;
use xltk_cli::commands;
use xltk_cli::config::{help_text, Config, Settings};
use xltk_cli::CliError;

#[derive(Parser)]
#[command(
    name = "xltk",
    version,
    about = "Train, evaluate, and inspect gated multi-source toxicity classifiers",
    after_help = help_text(),
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Config file of flat `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key (repeatable); see the key listing below.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master seed; shorthand for --set seed=N.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run the uncorrected Adam update (the literal update rule).
    #[arg(long, global = true)]
    no_bias_correction: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model; writes checkpoint, vocabularies, training log, and test metrics.
    Train,
    /// Score a trained checkpoint on the test split, with bootstrap intervals.
    Eval,
    /// Verify every analytic gradient against central finite differences.
    Gradcheck,
    /// Train all configured variants under one seed and compare them.
    Ablate,
    /// Per-token (token, sim, gate) report for one input comment.
    GateReport {
        /// The comment to analyze.
        #[arg(long, value_name = "TEXT")]
        text: String,
    },
    /// Correlation matrix across the three embedding sources.
    EmbedStats,
    /// Write stratified train/valid/test CSVs; optionally generate the corpus.
    Split {
        /// Generate an N-row seeded synthetic corpus instead of reading `data`.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if cli.no_bias_correction {
        cfg.set("bias_correction", "false")?;
    }
    let settings = Settings::from_config(&cfg)?;

    match cli.command {
        Cmd::Train => commands::train::run(&settings),
        Cmd::Eval => commands::eval::run(&settings),
        Cmd::Gradcheck => commands::gradcheck::run(&settings),
        Cmd::Ablate => commands::ablate::run(&settings),
        Cmd::GateReport { text } => commands::gate_report::run(&settings, &text),
        Cmd::EmbedStats => commands::embed_stats::run(&settings),
        Cmd::Split { synthetic } => commands::split::run(&settings, synthetic),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

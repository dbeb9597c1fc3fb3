use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use melab_core::harness::{parse_config, run_experiment, ExperimentConfig, ExperimentKind};
use melab_core::Error;

/// Measure mutual-exclusivity bias in neural networks and datasets.
#[derive(Parser)]
#[command(name = "melab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feedforward classifier on the one-to-one symbol task
    SynthClassify(Common),
    /// GRU encoder-decoder on the synthetic sequence task
    SynthSeq2seq(Common),
    /// New-word statistics of a parallel corpus
    MtNovelty(Common),
    /// New-class probability of a power-law image stream (labels only)
    ClassNovelty(Common),
    /// Online ConvNet: dataset vs model probability of a new class
    OmniglotTrain(Common),
    /// Online ConvNet with an oracle bias on unseen classes
    Oracle(Common),
    /// Grid of classifier configurations
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel runs (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::SynthClassify(c) => (ExperimentKind::SynthClassify, c),
            Command::SynthSeq2seq(c) => (ExperimentKind::SynthSeq2seq, c),
            Command::MtNovelty(c) => (ExperimentKind::MtNovelty, c),
            Command::ClassNovelty(c) => (ExperimentKind::ClassNovelty, c),
            Command::OmniglotTrain(c) => (ExperimentKind::OmniglotTrain, c),
            Command::Oracle(c) => (ExperimentKind::Oracle, c),
            Command::Sweep(c) => (ExperimentKind::Sweep, c),
        }
    }
}

fn run(kind: ExperimentKind, args: Common) -> Result<PathBuf, Error> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path, Some(kind))?,
        None => ExperimentConfig::new(kind),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::Parameter("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(e.to_string()))?;
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    cfg.out = Some(out.clone());
    run_experiment(&cfg, &out)?;
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(out) => {
            println!("{} finished; results in {}", kind.name(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

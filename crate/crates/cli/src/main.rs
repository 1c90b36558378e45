use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod config;
mod data;
mod evaluate;
mod scorer_check;
mod train;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cqg",
    version,
    about = "Curiosity-driven question generation pipeline"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags accepted by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Run configuration file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, later flags win.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ImportFormat {
    Squad,
    Quac,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DeriveMode {
    Conversational,
    Standard,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a native QA release into canonical JSONL.
    Import {
        #[arg(long, value_enum)]
        format: ImportFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Derive curiosity triplets from a canonical corpus.
    Derive {
        #[arg(long, value_enum)]
        mode: DeriveMode,
        /// Keep only pairs whose question entities all appear in the source.
        #[arg(long)]
        constrained: bool,
        /// Split the input belongs to.
        #[arg(long, default_value = "train")]
        split: String,
        /// Also write answer-sentence QG pairs for pretraining.
        #[arg(long)]
        qg_pairs: bool,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Supervised teacher-forcing training.
    Train(TrainArgs),
    /// Mixed supervised + self-critical reinforcement finetuning.
    RlFinetune {
        /// Checkpoint to start from.
        #[arg(long)]
        init: PathBuf,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Pretrain on standard QG pairs, then finetune on curiosity triplets.
    PretrainFinetune {
        #[arg(long)]
        standard_train: PathBuf,
        #[arg(long)]
        standard_val: Option<PathBuf>,
        /// Use the mixed objective in phase 2.
        #[arg(long)]
        rl: bool,
        #[arg(long)]
        skip_pretraining: bool,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Decode questions for every triplet of a file.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Overrides `decode.mode`.
        #[arg(long)]
        mode: Option<String>,
        /// Overrides `decode.k`.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score generations with BLEU, Self-BLEU and the QA metrics.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// `NAME=GENERATIONS.jsonl`; repeatable.
        #[arg(long = "system", required = true)]
        systems: Vec<String>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Build the analysis report bundle.
    Analyze(AnalyzeArgs),
    /// Verify the scorer protocol against a loopback stub, or serve the stub.
    StubScorerCheck {
        /// Check this running server instead of starting a loopback one.
        #[arg(long, conflicts_with = "serve")]
        url: Option<String>,
        /// Serve the stub scorer on this address until interrupted.
        #[arg(long, value_name = "ADDR")]
        serve: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Continue from a checkpoint directory written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Triplets the generations were produced from.
    #[arg(long)]
    input: PathBuf,
    /// `NAME=GENERATIONS.jsonl`; repeatable.
    #[arg(long = "system")]
    systems: Vec<String>,
    /// Human ratings CSV.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Checkpoint for the beam-divergence table at `analysis.beams`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Import { common, .. }
            | Command::Derive { common, .. }
            | Command::Generate { common, .. }
            | Command::Evaluate { common, .. }
            | Command::StubScorerCheck { common, .. } => common,
            Command::Train(args)
            | Command::RlFinetune { args, .. }
            | Command::PretrainFinetune { args, .. } => &args.common,
            Command::Analyze(args) => &args.common,
        }
    }
}

fn run_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &common.config {
        config.load_file(path)?;
    }
    config.apply_env(|k| std::env::var(k).ok())?;
    for pair in &common.set {
        config.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        config.set("seed", &seed.to_string())?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = run_config(cli.command.common())?;
    match cli.command {
        Command::Import {
            format,
            input,
            output,
            ..
        } => data::import(&config, format, &input, &output),
        Command::Derive {
            mode,
            constrained,
            split,
            qg_pairs,
            input,
            output,
            ..
        } => data::derive(
            &config,
            mode,
            constrained,
            &split,
            qg_pairs,
            &input,
            &output,
        ),
        Command::Train(args) => train::supervised(&config, &args),
        Command::RlFinetune { init, args } => train::rl_finetune(&config, &init, &args),
        Command::PretrainFinetune {
            standard_train,
            standard_val,
            rl,
            skip_pretraining,
            args,
        } => train::pretrain_finetune(
            &config,
            &standard_train,
            standard_val.as_deref(),
            rl,
            skip_pretraining,
            &args,
        ),
        Command::Generate {
            checkpoint,
            input,
            output,
            mode,
            k,
            ..
        } => evaluate::generate(&config, &checkpoint, &input, &output, mode.as_deref(), k),
        Command::Evaluate {
            input,
            systems,
            output,
            ..
        } => evaluate::evaluate(&config, &input, &systems, &output),
        Command::Analyze(args) => evaluate::analyze(&config, &args),
        Command::StubScorerCheck { url, serve, .. } => {
            scorer_check::run(url.as_deref(), serve.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

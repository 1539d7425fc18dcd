//! Command-line front end: `run <config>` executes a whole pipeline, and one
//! subcommand per stage kind runs a single stage whose flags mirror the
//! config keys (`--input data.csv` is `input = data.csv` in a config file).
//!
//! Exit codes: 0 on success, 1 on validation errors, 2 on stage failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ratekit_cli::config::PipelineConfig;
use ratekit_cli::error::{PipelineError, Result};
use ratekit_cli::pipeline::run_pipeline;

#[derive(Parser)]
#[command(
    name = "ratekit",
    about = "Representation-learning pipelines for ratemaking: embeddings in, GLM out",
    version
)]
struct Cli {
    /// Override the config seed (applies to every stage).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every stage of a pipeline config and write its manifest.
    Run {
        /// Path to the pipeline config file.
        config: PathBuf,
    },
    /// Generate a synthetic dataset (--generator, --out, generator params).
    Synth(StageArgs),
    /// Standardize the feature columns of a tabular CSV.
    Standardize(StageArgs),
    /// Fit PCA on tabular features and emit embeddings (and optionally the model).
    Pca(StageArgs),
    /// Train a fully-connected autoencoder and emit bottleneck embeddings.
    Ae(StageArgs),
    /// Train a convolutional autoencoder over images and emit embeddings.
    ConvAe(StageArgs),
    /// Train word2vec (cbow or skipgram) over a corpus and emit word vectors.
    Word2vec(StageArgs),
    /// Average word vectors into per-document centroid embeddings.
    DocEmbed(StageArgs),
    /// Train a many-to-one RNN over labeled sequences and emit h_T embeddings.
    RnnEmbed(StageArgs),
    /// Build data cuboids around geo points and train the regional autoencoder.
    Crae(StageArgs),
    /// Concatenate embedding files into a design matrix CSV.
    Assemble(StageArgs),
    /// Fit a GLM from a design matrix and a response column.
    GlmFit(StageArgs),
    /// Predict means from a fitted GLM and a design matrix.
    GlmPredict(StageArgs),
    /// Nearest-neighbor cosine report for one embedding.
    EvalIntrinsic(StageArgs),
    /// Holdout-deviance comparison of baseline vs augmented feature blocks.
    EvalExtrinsic(StageArgs),
}

/// Free-form `--key value` pairs mirroring the stage's config keys.
#[derive(clap::Args)]
struct StageArgs {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    rest: Vec<String>,
}

impl Command {
    fn stage_kind(&self) -> Option<(&'static str, &StageArgs)> {
        match self {
            Command::Run { .. } => None,
            Command::Synth(a) => Some(("synth", a)),
            Command::Standardize(a) => Some(("standardize", a)),
            Command::Pca(a) => Some(("pca", a)),
            Command::Ae(a) => Some(("ae", a)),
            Command::ConvAe(a) => Some(("conv-ae", a)),
            Command::Word2vec(a) => Some(("word2vec", a)),
            Command::DocEmbed(a) => Some(("doc-embed", a)),
            Command::RnnEmbed(a) => Some(("rnn-embed", a)),
            Command::Crae(a) => Some(("crae", a)),
            Command::Assemble(a) => Some(("assemble", a)),
            Command::GlmFit(a) => Some(("glm-fit", a)),
            Command::GlmPredict(a) => Some(("glm-predict", a)),
            Command::EvalIntrinsic(a) => Some(("eval-intrinsic", a)),
            Command::EvalExtrinsic(a) => Some(("eval-extrinsic", a)),
        }
    }
}

/// Turns `--key value` pairs into config `key = value` lines.
fn stage_config_text(kind: &str, args: &StageArgs, seed: Option<u64>) -> Result<String> {
    let mut text = String::new();
    if let Some(seed) = seed {
        text.push_str(&format!("seed = {seed}\n"));
    }
    text.push_str(&format!("[{kind} cli]\n"));
    let mut it = args.rest.iter();
    while let Some(flag) = it.next() {
        let key = flag.strip_prefix("--").ok_or_else(|| {
            PipelineError::validation(format!("expected --key, got {flag:?}"))
        })?;
        let value = it.next().ok_or_else(|| {
            PipelineError::validation(format!("flag --{key} is missing a value"))
        })?;
        text.push_str(&format!("{key} = {value}\n"));
    }
    Ok(text)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let config = PipelineConfig::load(config, cli.seed)?;
            let manifest = run_pipeline(&config)?;
            print!("{}", manifest.to_text());
            Ok(())
        }
        command => {
            let (kind, args) = command.stage_kind().expect("every non-run command is a stage");
            let text = stage_config_text(kind, args, cli.seed)?;
            let cwd = std::env::current_dir()?;
            let config = PipelineConfig::parse(&text, cwd, cli.seed)?;
            let artifacts = ratekit_cli::stages::execute(&config, &config.stages[0])?;
            for path in artifacts.outputs {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

//! `ctxmt`: one binary orchestrating the full experimental lifecycle, from
//! corpus generation through training, decoding, and evaluation.

mod commands;
mod common;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use ctxmt_core::model::ModelKind;

use crate::manifest::ExperimentManifest;

#[derive(Parser)]
#[command(
    name = "ctxmt",
    version,
    about = "Document-level context-aware NMT: zero-resource domain adaptation experiments",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Values given here override the
/// manifest named by `--config`.
#[derive(Args, Clone, Debug, Default)]
struct Global {
    /// Experiment manifest (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for anything stochastic in the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model kind.
    #[arg(long, global = true, value_parser = parse_kind)]
    model: Option<ModelKind>,
    /// Context size k in preceding sentences.
    #[arg(long, global = true)]
    ctx: Option<usize>,
    /// Beam size for decoding.
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// Output directory; defaults to $CTXMT_OUT_ROOT/<name> or runs/<name>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for decode parallelism (outputs are identical at any
    /// worker count; 1 by default).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Report the command's wall-clock time on completion.
    #[arg(long, global = true)]
    timing: bool,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::ALL
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown model kind {s:?}: expected one of {}", names.join(", "))
        })
}

impl Global {
    /// Loads the `--config` manifest (or an empty one) and folds the global
    /// flag overrides into it.
    fn manifest(&self) -> Result<ExperimentManifest> {
        let mut m = match &self.config {
            Some(path) => ExperimentManifest::load(path)?,
            None => ExperimentManifest::default(),
        };
        if let Some(seed) = self.seed {
            m.seed = Some(seed);
        }
        if let Some(kind) = self.model {
            m.model.kind = Some(kind);
        }
        if let Some(ctx) = self.ctx {
            m.model.context_size = Some(ctx);
        }
        if let Some(beam) = self.beam {
            m.decode.beam_size = Some(beam);
        }
        if let Some(workers) = self.workers {
            m.decode.workers = Some(workers);
        }
        if let Some(out) = &self.out {
            m.out = Some(out.clone());
        }
        Ok(m)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-domain corpus with its polysemy oracle.
    GenCorpus(commands::gen_corpus::GenCorpusArgs),
    /// Build and store the vocabulary of a training corpus.
    Prepare(commands::prepare::PrepareArgs),
    /// Train a model and write the final checkpoint.
    Train(commands::train::TrainArgs),
    /// Decode a corpus with a trained model.
    Translate(commands::translate::TranslateArgs),
    /// Score hypotheses: BLEU, paired bootstrap, disambiguation oracle.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Decode the domain-context ablation grid.
    Ablate(commands::ablate::AblateArgs),
    /// Train and apply the document-domain classifier.
    Classify(commands::classify::ClassifyArgs),
    /// Decode with an ensemble of trained models.
    Ensemble(commands::ensemble::EnsembleArgs),
    /// Print parameter counts per model kind.
    Params(commands::params::ParamsArgs),
    /// Measure decode seconds per sentence for trained models.
    Timing(commands::timing::TimingArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match &cli.command {
        Command::GenCorpus(args) => commands::gen_corpus::run(&cli.global, args),
        Command::Prepare(args) => commands::prepare::run(&cli.global, args),
        Command::Train(args) => commands::train::run(&cli.global, args),
        Command::Translate(args) => commands::translate::run(&cli.global, args),
        Command::Evaluate(args) => commands::evaluate::run(&cli.global, args),
        Command::Ablate(args) => commands::ablate::run(&cli.global, args),
        Command::Classify(args) => commands::classify::run(&cli.global, args),
        Command::Ensemble(args) => commands::ensemble::run(&cli.global, args),
        Command::Params(args) => commands::params::run(&cli.global, args),
        Command::Timing(args) => commands::timing::run(&cli.global, args),
    };
    if cli.global.timing {
        eprintln!("wall time: {:.2}s", started.elapsed().as_secs_f64());
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

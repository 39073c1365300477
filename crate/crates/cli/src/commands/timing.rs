//! `ctxmt timing`: mean decode seconds per sentence for one or more trained
//! models over the same input. Results go to stdout only; wall-clock numbers
//! are machine-dependent and would break the rerun-identical property of the
//! directory artifacts.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;

use ctxmt_core::decode::translate_example;

use crate::common::{examples_for, load_documents, load_model, load_vocab};
use crate::manifest::{require, ExperimentManifest};
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct TimingArgs {
    /// Manifest of a trained run to time; repeat once per model.
    #[arg(long = "member", required = true)]
    pub members: Vec<PathBuf>,
    /// Corpus supplying the timed sentences; defaults to the first member's
    /// test set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// How many sentences to time.
    #[arg(long, default_value_t = 30)]
    pub sentences: usize,
    /// Untimed warm-up sentences per model.
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
}

pub fn run(global: &Global, args: &TimingArgs) -> Result<()> {
    let m = global.manifest()?;
    let manifests: Vec<ExperimentManifest> = args
        .members
        .iter()
        .map(|p| ExperimentManifest::load(p))
        .collect::<Result<_>>()?;
    let first = &manifests[0];
    let vocab_path = require(&first.corpus.vocab, "vocabulary", "members must record corpus.vocab")?;
    let vocab = load_vocab(&vocab_path)?;
    let input = match &args.input {
        Some(p) => p.clone(),
        None => require(&first.corpus.test, "test corpus", "pass --input")?,
    };
    let docs = load_documents(&input)?;
    let beam = m.beam_params();

    println!("{:<14} {:>12} {:>12} {:>10}", "model", "mean s/sent", "stddev", "sentences");
    for member in &manifests {
        let ckpt = require(&member.checkpoint, "checkpoint", "train the member first")?;
        let cfg = member.model_config(vocab.len())?;
        let model = load_model(&ckpt, cfg.clone())?;
        let examples = examples_for(&docs, &vocab, &cfg);
        let timed = examples.iter().cycle().take(args.warmup + args.sentences);

        let mut seconds = Vec::with_capacity(args.sentences);
        for (i, ex) in timed.enumerate() {
            let start = Instant::now();
            translate_example(&model, ex, &beam)?;
            if i >= args.warmup {
                seconds.push(start.elapsed().as_secs_f64());
            }
        }
        let n = seconds.len() as f64;
        let mean = seconds.iter().sum::<f64>() / n;
        let var = seconds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        println!(
            "{:<14} {:>12.4} {:>12.4} {:>10}",
            cfg.kind.name(),
            mean,
            var.sqrt(),
            seconds.len()
        );
    }
    Ok(())
}

//! `ctxmt ensemble`: decodes with a weighted product of several checkpoints'
//! distributions. Members arrive as trained-run manifests so each carries its
//! own architecture; the vocabulary must be shared.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use ctxmt_core::decode::{surface_text, translate_corpus_ensemble};
use ctxmt_core::model::Model;

use crate::common::{examples_for, load_documents, load_model, load_vocab, out_dir, write_lines};
use crate::manifest::{require, ExperimentManifest};
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct EnsembleArgs {
    /// Manifest of a trained run to include; repeat once per member.
    #[arg(long = "member", required = true)]
    pub members: Vec<PathBuf>,
    /// Comma-separated member weights; defaults to uniform.
    #[arg(long)]
    pub weights: Option<String>,
    /// Corpus to translate; defaults to the first member's test set.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Serialize)]
struct EnsembleRecord {
    members: Vec<PathBuf>,
    weights: Vec<f64>,
    input: PathBuf,
    beam_size: usize,
    sentences: usize,
}

pub fn run(global: &Global, args: &EnsembleArgs) -> Result<()> {
    let m = global.manifest()?;
    let weights: Vec<f64> = match &args.weights {
        Some(s) => s
            .split(',')
            .map(|w| w.trim().parse::<f64>().context("parsing --weights"))
            .collect::<Result<_>>()?,
        None => vec![1.0; args.members.len()],
    };
    if weights.len() != args.members.len() {
        bail!("{} weights for {} members", weights.len(), args.members.len());
    }

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

    let mut models: Vec<Model> = Vec::with_capacity(manifests.len());
    for (path, member) in args.members.iter().zip(&manifests) {
        let ckpt = require(&member.checkpoint, "checkpoint", "train the member first")?;
        let cfg = member.model_config(vocab.len())?;
        models.push(
            load_model(&ckpt, cfg)
                .with_context(|| format!("loading member {}", path.display()))?,
        );
    }

    // Context geometry must agree across members; each example feeds every
    // member the same window.
    let ctx = models[0].cfg.context_size;
    let limit = models[0].cfg.ctx_sentence_limit;
    for model in &models[1..] {
        if model.cfg.context_size != ctx || model.cfg.ctx_sentence_limit != limit {
            bail!(
                "members disagree on context geometry ({} vs {} sentences)",
                ctx,
                model.cfg.context_size
            );
        }
    }
    let examples = examples_for(&docs, &vocab, &models[0].cfg);

    let beam = m.beam_params();
    let pairs: Vec<(&Model, f64)> =
        models.iter().zip(weights.iter().copied()).collect();
    let hyps = translate_corpus_ensemble(&pairs, &examples, &beam)?;
    let lines: Vec<String> = hyps.iter().map(|h| surface_text(&vocab, h)).collect();

    let dir = out_dir(m.out.clone(), "ensemble")?;
    write_lines(&dir.join("hyps.txt"), &lines)?;
    let record = EnsembleRecord {
        members: args.members.clone(),
        weights,
        input,
        beam_size: beam.beam_size,
        sentences: lines.len(),
    };
    let record_path = dir.join("ensemble.json");
    fs::write(&record_path, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("writing {}", record_path.display()))?;
    println!(
        "{} sentences decoded by {} members (beam {}) into {}",
        lines.len(),
        pairs.len(),
        beam.beam_size,
        dir.join("hyps.txt").display()
    );
    Ok(())
}

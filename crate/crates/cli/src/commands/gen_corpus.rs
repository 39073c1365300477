//! `ctxmt gen-corpus`: deterministic synthetic corpus generation.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ctxmt_core::data::save_corpus;
use ctxmt_core::synth::{ambiguity_stats, generate, save_oracle, SynthConfig};

use crate::common::out_dir;
use crate::manifest::CorpusPaths;
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct GenCorpusArgs {
    /// Override the per-sentence polysemy rate.
    #[arg(long)]
    pub poly_rate: Option<f64>,
    /// Override the fraction of polysemous sentences left cue-free.
    #[arg(long)]
    pub ambiguous_rate: Option<f64>,
}

pub fn run(global: &Global, args: &GenCorpusArgs) -> Result<()> {
    let mut m = global.manifest()?;
    let mut cfg = m.synth.clone().unwrap_or_else(|| SynthConfig::desk(m.seed.unwrap_or(11)));
    if let Some(seed) = m.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.poly_rate {
        cfg.p_polysemous = p;
    }
    if let Some(p) = args.ambiguous_rate {
        cfg.p_ambiguous = p;
    }

    let corpus = generate(&cfg).context("generating corpus")?;
    let dir = out_dir(m.out.clone(), "corpus")?;
    let file = |name: &str| dir.join(name);
    save_corpus(&file("train.txt"), &corpus.train_documents())?;
    save_corpus(&file("dev.txt"), &corpus.dev_documents())?;
    save_corpus(&file("test.txt"), &corpus.test_documents())?;
    save_corpus(&file("heldout_test.txt"), &corpus.heldout_test)?;
    save_corpus(&file("finetune_train.txt"), &corpus.finetune_train)?;
    save_corpus(&file("finetune_dev.txt"), &corpus.finetune_dev)?;
    save_oracle(&file("oracle.tsv"), &corpus.oracle)?;

    // Stored paths are relative to the manifest so the directory can move.
    m.corpus = CorpusPaths {
        train: Some(PathBuf::from("train.txt")),
        dev: Some(PathBuf::from("dev.txt")),
        test: Some(PathBuf::from("test.txt")),
        heldout_test: Some(PathBuf::from("heldout_test.txt")),
        finetune_train: Some(PathBuf::from("finetune_train.txt")),
        finetune_dev: Some(PathBuf::from("finetune_dev.txt")),
        oracle: Some(PathBuf::from("oracle.tsv")),
        vocab: None,
    };
    m.seed = Some(cfg.seed);
    m.out = Some(dir.clone());
    m.synth = Some(cfg.clone());
    m.save(&dir.join("manifest.toml"))?;

    let train_docs = corpus.train_documents();
    let stats = ambiguity_stats(&corpus.heldout_test, &corpus.lexicon, 10);
    println!(
        "corpus written to {}: {} train domains + held-out {:?}",
        dir.display(),
        cfg.train_domains.len(),
        cfg.heldout.name
    );
    println!(
        "  train {} docs, dev {}, test {}, held-out test {}, fine-tune {}+{}",
        train_docs.len(),
        corpus.dev_documents().len(),
        corpus.test_documents().len(),
        corpus.heldout_test.len(),
        corpus.finetune_train.len(),
        corpus.finetune_dev.len()
    );
    println!(
        "  oracle entries {}; held-out polysemy: {} occurrences, {:.0}% sentence-ambiguous, {:.0}% context-covered at k=10",
        corpus.oracle.len(),
        stats.occurrences,
        100.0 * stats.sentence_ambiguous,
        100.0 * stats.context_covered
    );
    Ok(())
}

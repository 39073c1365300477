//! `ctxmt prepare`: vocabulary construction over the training corpus.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use ctxmt_core::data::{build_examples, Vocabulary};

use crate::common::load_documents;
use crate::manifest::{require, ExperimentManifest};
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct PrepareArgs {
    /// Training corpus; defaults to the manifest's corpus.train.
    #[arg(long)]
    pub train: Option<PathBuf>,
}

pub fn run(global: &Global, args: &PrepareArgs) -> Result<()> {
    let m = global.manifest()?;
    let train_path = match &args.train {
        Some(p) => p.clone(),
        None => require(&m.corpus.train, "training corpus", "run `ctxmt gen-corpus` first")?,
    };
    let docs = load_documents(&train_path)?;
    let vocab = Vocabulary::build(&docs);

    // The vocabulary lives next to the corpus it was built from, and the
    // corpus manifest (when present) is updated to point at it.
    let dir = train_path.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let vocab_path = m
        .out
        .as_ref()
        .map(|o| o.join("vocab.json"))
        .unwrap_or_else(|| dir.join("vocab.json"));
    vocab.save(&vocab_path)?;
    let manifest_path = dir.join("manifest.toml");
    if manifest_path.exists() {
        let mut corpus_manifest = ExperimentManifest::load(&manifest_path)?;
        corpus_manifest.corpus.vocab = Some(vocab_path.clone());
        corpus_manifest.save(&manifest_path)?;
    }

    let sentences: usize = docs.iter().map(|d| d.sentences.len()).sum();
    let k = m.model.context_size.unwrap_or(10);
    let examples = build_examples(&docs, &vocab, k, 100);
    println!(
        "vocabulary written to {}: {} symbols ({} domains tagged)",
        vocab_path.display(),
        vocab.len(),
        vocab.domains().len()
    );
    println!(
        "  {} documents, {} sentences, {} training examples at k={}",
        docs.len(),
        sentences,
        examples.len(),
        k
    );
    Ok(())
}

//! `ctxmt translate`: beam-search decoding of a corpus file.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use ctxmt_core::decode::surface_text;

use crate::common::{decode_parallel, examples_for, load_documents, load_model, load_vocab, out_dir, write_lines};
use crate::manifest::require;
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct TranslateArgs {
    /// Corpus to decode; defaults to the manifest's corpus.test.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Model weights; defaults to the manifest's checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn run(global: &Global, args: &TranslateArgs) -> Result<()> {
    let mut m = global.manifest()?;
    if let Some(p) = &args.input {
        m.corpus.test = Some(p.clone());
    }
    if let Some(p) = &args.checkpoint {
        m.checkpoint = Some(p.clone());
    }
    let input = require(&m.corpus.test, "input corpus", "pass --input or set corpus.test")?;
    let vocab_path = require(&m.corpus.vocab, "vocabulary", "run `ctxmt prepare` first")?;
    let ckpt = require(&m.checkpoint, "checkpoint", "run `ctxmt train` first")?;

    let vocab = load_vocab(&vocab_path)?;
    let cfg = m.model_config(vocab.len())?;
    if let Some(recorded) = m.model.vocab_size {
        if recorded != vocab.len() {
            bail!(
                "manifest records vocab size {recorded} but {} holds {} symbols",
                vocab_path.display(),
                vocab.len()
            );
        }
    }
    let model = load_model(&ckpt, cfg.clone())?;
    let docs = load_documents(&input)?;
    let examples = examples_for(&docs, &vocab, &cfg);
    let beam = m.beam_params();
    let workers = m.decode.workers.unwrap_or(1);

    let hyps = decode_parallel(&model, &examples, &beam, workers)?;
    let lines: Vec<String> = hyps.iter().map(|h| surface_text(&vocab, h)).collect();

    let dir = out_dir(m.out.clone(), "translate")?;
    let out_path = dir.join("hyps.txt");
    write_lines(&out_path, &lines)?;
    m.record_beam(&beam);
    m.out = Some(dir.clone());
    m.save(&dir.join("manifest.toml"))?;
    println!(
        "decoded {} sentences from {} with beam {} -> {}",
        lines.len(),
        input.display(),
        beam.beam_size,
        out_path.display()
    );
    Ok(())
}

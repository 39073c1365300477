//! Plumbing shared by the subcommands: output-directory resolution, corpus
//! and checkpoint loading with actionable errors, and order-preserving
//! parallel decoding.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use ctxmt_core::data::{build_examples, Document, TrainingExample, Vocabulary};
use ctxmt_core::decode::{translate_example, BeamHypothesis, BeamParams};
use ctxmt_core::model::{Checkpoint, Model, ModelConfig};

/// Environment variable naming the default root for output directories.
pub const OUT_ROOT_ENV: &str = "CTXMT_OUT_ROOT";

/// Resolves a command's output directory: the explicit flag if given, else
/// `$CTXMT_OUT_ROOT/<name>`, else `runs/<name>`. The directory is created.
pub fn out_dir(flag: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let dir = flag.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(name)
    });
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let loaded = ctxmt_core::data::load_corpus(path)
        .with_context(|| format!("loading corpus {}", path.display()))?;
    for warning in &loaded.warnings {
        eprintln!("warning: {}: {}", path.display(), warning);
    }
    if loaded.documents.is_empty() {
        bail!("corpus {} contains no documents", path.display());
    }
    Ok(loaded.documents)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    if !path.exists() {
        bail!("vocabulary not found at {}: run `ctxmt prepare` first", path.display());
    }
    Ok(Vocabulary::load(path)?)
}

/// Loads a checkpoint into a model of the given configuration.
pub fn load_model(path: &Path, cfg: ModelConfig) -> Result<Model> {
    if !path.exists() {
        bail!("checkpoint not found at {}: run `ctxmt train` first", path.display());
    }
    let ckpt =
        Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ckpt.into_model(cfg)?)
}

/// Builds decode-ready examples for a document list.
pub fn examples_for(docs: &[Document], vocab: &Vocabulary, cfg: &ModelConfig) -> Vec<TrainingExample> {
    build_examples(docs, vocab, cfg.context_size, cfg.ctx_sentence_limit)
}

/// Decodes a corpus with `workers` threads, preserving input order exactly.
/// Each sentence is decoded independently, so the outputs are identical to a
/// single-threaded run regardless of the worker count.
pub fn decode_parallel(
    model: &Model,
    examples: &[TrainingExample],
    params: &BeamParams,
    workers: usize,
) -> Result<Vec<BeamHypothesis>> {
    let workers = workers.max(1).min(examples.len().max(1));
    if workers == 1 {
        return Ok(ctxmt_core::decode::translate_corpus(model, examples, params)?);
    }
    let chunk = examples.len().div_ceil(workers);
    let mut slots: Vec<Option<BeamHypothesis>> = vec![None; examples.len()];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for (w, chunk_slice) in examples.chunks(chunk).enumerate() {
            handles.push((
                w * chunk,
                scope.spawn(move || -> Result<Vec<BeamHypothesis>> {
                    chunk_slice
                        .iter()
                        .map(|ex| Ok(translate_example(model, ex, params)?))
                        .collect()
                }),
            ));
        }
        for (start, handle) in handles {
            let hyps = handle.join().expect("decode worker panicked")?;
            for (i, hyp) in hyps.into_iter().enumerate() {
                slots[start + i] = Some(hyp);
            }
        }
        Ok(())
    })?;
    Ok(slots.into_iter().map(|s| s.expect("every slot decoded")).collect())
}

/// Writes one line per sentence.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        bail!("file not found at {}", path.display());
    }
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Splits documents by domain, preserving first-seen domain order.
pub fn by_domain(docs: &[Document]) -> Vec<(String, Vec<Document>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Document>> = Vec::new();
    for doc in docs {
        match order.iter().position(|d| d == &doc.domain) {
            Some(i) => groups[i].push(doc.clone()),
            None => {
                order.push(doc.domain.clone());
                groups.push(vec![doc.clone()]);
            }
        }
    }
    order.into_iter().zip(groups).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_prefers_flag_then_env_root() {
        let dir = tempfile::tempdir().unwrap();
        let explicit = dir.path().join("here");
        assert_eq!(out_dir(Some(explicit.clone()), "x").unwrap(), explicit);
        assert!(explicit.is_dir(), "flag directory is created");
    }

    #[test]
    fn by_domain_preserves_first_seen_order() {
        let doc = |id: &str, domain: &str| Document {
            doc_id: id.into(),
            domain: domain.into(),
            sentences: vec![(vec!["a".into()], vec!["b".into()])],
        };
        let grouped = by_domain(&[doc("1", "b"), doc("2", "a"), doc("3", "b")]);
        assert_eq!(grouped[0].0, "b");
        assert_eq!(grouped[0].1.len(), 2);
        assert_eq!(grouped[1].0, "a");
    }
}

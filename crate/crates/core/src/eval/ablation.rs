//! Representative-context selection and the context-mismatch ablation grid:
//! decode every domain's test set under every domain's "most typical"
//! context and compare with the true contexts.

use crate::data::{TrainingExample, Vocabulary};
use crate::decode::{translate_corpus, surface_text, BeamParams};
use crate::error::{Error, Result};
use crate::eval::bleu::corpus_bleu;
use crate::model::Model;
use crate::tensor::Tensor;

/// Cosine similarity; zero-norm inputs compare as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine needs equal-length vectors");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Mean of the raw embedding rows of the context's tokens (pre-FFNN, no
/// positional encoding); None for an empty context.
pub fn mean_context_vector(ctx_ids: &[usize], embed: &Tensor) -> Option<Vec<f64>> {
    if ctx_ids.is_empty() {
        return None;
    }
    let d = embed.cols();
    let mut mean = vec![0.0; d];
    for &id in ctx_ids {
        for (m, &v) in mean.iter_mut().zip(embed.row(id)) {
            *m += v;
        }
    }
    let inv = 1.0 / ctx_ids.len() as f64;
    for m in mean.iter_mut() {
        *m *= inv;
    }
    Some(mean)
}

/// Picks the context closest (by cosine) to the mean of all context
/// representations: index into `contexts` of the argmax, ties toward the
/// earliest. Empty contexts are excluded from both the mean and the
/// candidacy; None when every context is empty.
pub fn representative_context(contexts: &[Vec<usize>], embed: &Tensor) -> Option<usize> {
    let candidates: Vec<(usize, Vec<f64>)> = contexts
        .iter()
        .enumerate()
        .filter_map(|(i, ctx)| mean_context_vector(ctx, embed).map(|v| (i, v)))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let d = candidates[0].1.len();
    let mut centroid = vec![0.0; d];
    for (_, v) in &candidates {
        for (c, x) in centroid.iter_mut().zip(v) {
            *c += x;
        }
    }
    let inv = 1.0 / candidates.len() as f64;
    for c in centroid.iter_mut() {
        *c *= inv;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in &candidates {
        let sim = cosine(v, &centroid);
        if best.map_or(true, |(_, s)| sim > s) {
            best = Some((*i, sim));
        }
    }
    best.map(|(i, _)| i)
}

/// The D x (D+1) ablation grid: rows are test domains, the first D columns
/// are the domain whose representative context was forced onto every test
/// sentence, and the final column uses each sentence's true context.
#[derive(Clone, Debug)]
pub struct AblationGrid {
    pub domains: Vec<String>,
    /// cells[row][col], col = domains.len() is the true-context column.
    pub cells: Vec<Vec<f64>>,
}

impl AblationGrid {
    pub fn true_column(&self, row: usize) -> f64 {
        self.cells[row][self.domains.len()]
    }

    pub fn diagonal(&self, row: usize) -> f64 {
        self.cells[row][row]
    }
}

fn source_embedding(model: &Model) -> &Tensor {
    model
        .params
        .get("embed")
        .or_else(|| model.params.get("src_embed"))
        .expect("every model carries a source embedding table")
}

/// Computes each domain's representative context from its test examples and
/// decodes every (test domain, context domain) pairing plus the true-context
/// column, scoring each cell with corpus BLEU.
pub fn ablation_matrix(
    model: &Model,
    test_by_domain: &[(String, Vec<TrainingExample>)],
    vocab: &Vocabulary,
    params: &BeamParams,
) -> Result<AblationGrid> {
    if test_by_domain.is_empty() {
        return Err(Error::Invalid("ablation needs at least one domain".into()));
    }
    let embed = source_embedding(model);
    let mut representatives: Vec<Vec<Vec<usize>>> = Vec::with_capacity(test_by_domain.len());
    for (domain, examples) in test_by_domain {
        let contexts: Vec<Vec<usize>> = examples.iter().map(|e| e.context_ids()).collect();
        let idx = representative_context(&contexts, embed).ok_or_else(|| {
            Error::Invalid(format!("domain {domain} has no nonempty context to represent it"))
        })?;
        representatives.push(examples[idx].ctx_sentences.clone());
    }

    let d = test_by_domain.len();
    let mut cells = Vec::with_capacity(d);
    for (_, examples) in test_by_domain {
        let refs: Vec<String> = examples
            .iter()
            .map(|e| e.tgt.iter().map(|&id| vocab.token(id)).collect::<Vec<_>>().join(" "))
            .collect();
        let mut row = Vec::with_capacity(d + 1);
        for rep in &representatives {
            let forced: Vec<TrainingExample> = examples
                .iter()
                .map(|e| TrainingExample { ctx_sentences: rep.clone(), ..e.clone() })
                .collect();
            let hyps: Vec<String> = translate_corpus(model, &forced, params)?
                .iter()
                .map(|h| surface_text(vocab, h))
                .collect();
            row.push(corpus_bleu(&hyps, &refs, 4)?.score);
        }
        let hyps: Vec<String> = translate_corpus(model, examples, params)?
            .iter()
            .map(|h| surface_text(vocab, h))
            .collect();
        row.push(corpus_bleu(&hyps, &refs, 4)?.score);
        cells.push(row);
    }
    Ok(AblationGrid {
        domains: test_by_domain.iter().map(|(d, _)| d.clone()).collect(),
        cells,
    })
}

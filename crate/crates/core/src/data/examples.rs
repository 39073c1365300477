//! Context-window assembly: turning documents into per-sentence training
//! examples carrying their k-sentence source context.

use super::corpus::Document;
use super::vocab::{TokenId, Vocabulary, SEP_ID};

/// One sentence pair plus everything the context models need to know about
/// where it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    /// Bare source token ids, no frame symbols.
    pub src: Vec<TokenId>,
    /// Bare target token ids, no frame symbols.
    pub tgt: Vec<TokenId>,
    /// The preceding source sentences (oldest first), each already truncated
    /// to the per-sentence context limit. Kept per sentence so concatenation
    /// baselines can drop whole sentences on overflow.
    pub ctx_sentences: Vec<Vec<TokenId>>,
    /// Oracle domain label of the enclosing document.
    pub domain: String,
    /// Tag id for the oracle domain, when the vocabulary reserves one.
    pub tag: Option<TokenId>,
    pub doc_id: String,
    /// Sentence index within the document.
    pub position: usize,
}

impl TrainingExample {
    /// Flattened context: sentences joined by <SEP>, oldest first. Empty for
    /// document-initial sentences.
    pub fn context_ids(&self) -> Vec<TokenId> {
        join_with_sep(&self.ctx_sentences)
    }

    /// Content tokens of the context, excluding separators.
    pub fn context_token_count(&self) -> usize {
        self.ctx_sentences.iter().map(Vec::len).sum()
    }
}

pub fn join_with_sep(sentences: &[Vec<TokenId>]) -> Vec<TokenId> {
    let mut out = Vec::new();
    for (i, sent) in sentences.iter().enumerate() {
        if i > 0 {
            out.push(SEP_ID);
        }
        out.extend_from_slice(sent);
    }
    out
}

/// Context ids for sentence `index` of a document: the min(k, index)
/// preceding source sentences, oldest first, each truncated to
/// `sent_limit` tokens (keeping the head), joined by <SEP>. Never crosses
/// document boundaries.
pub fn build_context(
    doc: &Document,
    index: usize,
    k: usize,
    sent_limit: usize,
    vocab: &Vocabulary,
) -> Vec<TokenId> {
    join_with_sep(&context_sentences(doc, index, k, sent_limit, vocab))
}

fn context_sentences(
    doc: &Document,
    index: usize,
    k: usize,
    sent_limit: usize,
    vocab: &Vocabulary,
) -> Vec<Vec<TokenId>> {
    assert!(
        index < doc.sentences.len(),
        "sentence index {} out of range for document {:?} with {} sentences",
        index,
        doc.doc_id,
        doc.sentences.len()
    );
    let start = index.saturating_sub(k);
    (start..index)
        .map(|i| {
            let (src, _) = &doc.sentences[i];
            let truncated = &src[..src.len().min(sent_limit)];
            vocab.encode(&truncated.to_vec())
        })
        .collect()
}

/// Windows every sentence of every document into a TrainingExample. Nothing
/// is dropped here; overlong sentence pairs are removed by
/// [`filter_overlong`] as a separate step.
pub fn build_examples(
    documents: &[Document],
    vocab: &Vocabulary,
    k: usize,
    sent_limit: usize,
) -> Vec<TrainingExample> {
    let mut out = Vec::new();
    for doc in documents {
        let tag = vocab.domain_tag(&doc.domain);
        for (index, (src, tgt)) in doc.sentences.iter().enumerate() {
            out.push(TrainingExample {
                src: vocab.encode(src),
                tgt: vocab.encode(tgt),
                ctx_sentences: context_sentences(doc, index, k, sent_limit, vocab),
                domain: doc.domain.clone(),
                tag,
                doc_id: doc.doc_id.clone(),
                position: index,
            });
        }
    }
    out
}

/// Removes examples whose source or target exceeds `max_tokens`, returning
/// the survivors and the number dropped. Context windows of later sentences
/// are unaffected; the limit applies to the training pair itself.
pub fn filter_overlong(
    examples: Vec<TrainingExample>,
    max_tokens: usize,
) -> (Vec<TrainingExample>, usize) {
    let before = examples.len();
    let kept: Vec<TrainingExample> = examples
        .into_iter()
        .filter(|e| e.src.len() <= max_tokens && e.tgt.len() <= max_tokens)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

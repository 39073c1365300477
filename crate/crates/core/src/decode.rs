//! Beam-search inference with cached encoder states, plus probability-space
//! model ensembling.

use serde::{Deserialize, Serialize};

use crate::data::{TrainingExample, Vocabulary, BOS_ID, EOS_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::model::{prepare_input, Model};
use crate::tensor::{Tape, Tensor};

// ── hypotheses ──

/// One partial or finished translation on the beam.
#[derive(Clone, Debug)]
pub struct BeamHypothesis {
    /// Emitted target tokens; ends with <EOS> exactly when finished.
    pub tokens: Vec<usize>,
    /// Sum of next-token log-probabilities over `tokens`.
    pub cum_log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Length-normalized score: cumulative log-prob / length^alpha.
    pub fn score(&self, alpha: f64) -> f64 {
        self.cum_log_prob / (self.tokens.len().max(1) as f64).powf(alpha)
    }

    /// Tokens without the terminating <EOS>, ready for text output.
    pub fn surface(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS_ID) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Search knobs. The full-scale experiments use beam 12; the desk default
/// keeps runs quick. `max_len` falls back to 2 × source length + 10.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BeamParams {
    pub beam_size: usize,
    pub alpha: f64,
    pub max_len: Option<usize>,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams { beam_size: 4, alpha: 1.0, max_len: None }
    }
}

impl BeamParams {
    pub fn with_beam(beam_size: usize) -> BeamParams {
        BeamParams { beam_size, ..BeamParams::default() }
    }

    fn limit(&self, source_len: usize) -> usize {
        self.max_len.unwrap_or(2 * source_len + 10)
    }
}

// ── scorers ──

/// Anything that can turn an emitted prefix into a next-token distribution.
/// Implementations must be deterministic in the prefix.
pub trait NextTokenScorer {
    fn vocab_size(&self) -> usize;
    /// Probability distribution (sums to 1) over the next token given the
    /// emitted prefix (without <BOS>).
    fn next_probs(&self, prefix: &[usize]) -> Vec<f64>;
}

/// Per-sentence decoding state for one model: the source (and context)
/// encoder runs once, its outputs are frozen to plain tensors, and every
/// decode step replays only the decoder over them.
pub struct DecodeState<'m> {
    model: &'m Model,
    enc: Tensor,
    ctx: Option<(Tensor, Vec<bool>)>,
    domain: Option<Tensor>,
}

impl<'m> DecodeState<'m> {
    pub fn prepare(model: &'m Model, ex: &TrainingExample) -> Result<DecodeState<'m>> {
        let input = prepare_input(&model.cfg, ex)?;
        let mut tape = Tape::new(0);
        tape.set_train(false);
        let domain_node = if model.cfg.kind.uses_domain_embedding() {
            model.domain_embedding(&mut tape, &input.ctx)
        } else {
            None
        };
        let enc_node = model.encode_source(&mut tape, &input.src, domain_node);
        let ctx = if model.cfg.kind.uses_context_encoder() {
            let (node, mask) = model.encode_context(&mut tape, &input.ctx);
            Some((tape.value(node).clone(), mask))
        } else {
            None
        };
        Ok(DecodeState {
            model,
            enc: tape.value(enc_node).clone(),
            ctx,
            domain: domain_node.map(|n| tape.value(n).clone()),
        })
    }
}

/// Row `t` of the logits as a softmax distribution, in plain f64 math.
fn softmax_row(logits: &Tensor, row: usize) -> Vec<f64> {
    let v = logits.cols();
    let mut probs: Vec<f64> = (0..v).map(|j| logits.at(row, j)).collect();
    let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    probs
}

impl NextTokenScorer for DecodeState<'_> {
    fn vocab_size(&self) -> usize {
        self.model.cfg.vocab_size
    }

    fn next_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let mut tape = Tape::new(0);
        tape.set_train(false);
        let enc = tape.leaf(self.enc.clone());
        let ctx_leaf = self.ctx.as_ref().map(|(t, m)| (tape.leaf(t.clone()), m.as_slice()));
        let domain = if self.model.cfg.domemb_decoder_side {
            self.domain.as_ref().map(|t| tape.leaf(t.clone()))
        } else {
            None
        };
        let mut tgt_in = Vec::with_capacity(prefix.len() + 1);
        tgt_in.push(BOS_ID);
        tgt_in.extend_from_slice(prefix);
        let logits = self.model.decode(&mut tape, &tgt_in, enc, ctx_leaf, domain);
        let values = tape.value(logits);
        softmax_row(values, tgt_in.len() - 1)
    }
}

/// Weighted probability-space mixture of several scorers. Weights are
/// normalized at construction; members must share a vocabulary size.
pub struct EnsembleScorer<S: NextTokenScorer> {
    members: Vec<(S, f64)>,
}

impl<S: NextTokenScorer> EnsembleScorer<S> {
    pub fn new(members: Vec<(S, f64)>) -> Result<EnsembleScorer<S>> {
        if members.is_empty() {
            return Err(Error::Invalid("ensemble needs at least one member".into()));
        }
        let v = members[0].0.vocab_size();
        if members.iter().any(|(m, _)| m.vocab_size() != v) {
            return Err(Error::Invalid("ensemble members disagree on vocabulary size".into()));
        }
        let total: f64 = members.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("ensemble weights must sum to a positive value".into()));
        }
        let members = members.into_iter().map(|(m, w)| (m, w / total)).collect();
        Ok(EnsembleScorer { members })
    }

    pub fn uniform(scorers: Vec<S>) -> Result<EnsembleScorer<S>> {
        EnsembleScorer::new(scorers.into_iter().map(|s| (s, 1.0)).collect())
    }
}

impl<S: NextTokenScorer> NextTokenScorer for EnsembleScorer<S> {
    fn vocab_size(&self) -> usize {
        self.members[0].0.vocab_size()
    }

    fn next_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let mut mix = vec![0.0; self.vocab_size()];
        for (member, weight) in &self.members {
            if *weight == 0.0 {
                continue;
            }
            for (m, p) in mix.iter_mut().zip(member.next_probs(prefix)) {
                *m += weight * p;
            }
        }
        mix
    }
}

// ── beam search ──

/// Standard beam search with length normalization. Finished hypotheses
/// leave the beam and are compared by normalized score at the end; the
/// search stops early only when no surviving prefix could still beat the
/// best finished hypothesis (an exact bound, so early stopping never
/// changes the result). An empty source emits <EOS> immediately.
pub fn beam_search<S: NextTokenScorer>(
    scorer: &S,
    source_len: usize,
    params: &BeamParams,
) -> BeamHypothesis {
    assert!(params.beam_size >= 1, "beam size must be at least 1");
    assert!(params.alpha >= 0.0, "length-normalization alpha must be nonnegative");
    if source_len == 0 {
        return BeamHypothesis { tokens: vec![EOS_ID], cum_log_prob: 0.0, finished: true };
    }
    let max_len = params.limit(source_len).max(1);

    let mut active =
        vec![BeamHypothesis { tokens: Vec::new(), cum_log_prob: 0.0, finished: false }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        // (cum log-prob, parent index, token): the extra fields make the
        // ranking a total order, so ties cannot introduce nondeterminism.
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (parent, hyp) in active.iter().enumerate() {
            let probs = scorer.next_probs(&hyp.tokens);
            for (token, &p) in probs.iter().enumerate() {
                if token == PAD_ID || token == BOS_ID || p <= 0.0 {
                    continue;
                }
                candidates.push((hyp.cum_log_prob + p.ln(), parent, token));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2))
        });

        let mut next = Vec::with_capacity(params.beam_size);
        for &(lp, parent, token) in &candidates {
            let mut tokens = active[parent].tokens.clone();
            tokens.push(token);
            let hyp = BeamHypothesis { tokens, cum_log_prob: lp, finished: token == EOS_ID };
            if hyp.finished {
                finished.push(hyp);
            } else if next.len() < params.beam_size {
                next.push(hyp);
            }
            if next.len() >= params.beam_size && finished.len() >= params.beam_size {
                break;
            }
        }
        active = next;

        // A prefix's score can only improve by reaching the maximum length
        // with free tokens, so cum/max_len bounds everything it could become.
        if let Some(best) = best_by_score(&finished, params.alpha) {
            let bound = (max_len as f64).powf(params.alpha);
            active.retain(|h| h.cum_log_prob / bound > best.score(params.alpha));
        }
    }

    for hyp in active {
        finished.push(hyp);
    }
    best_by_score(&finished, params.alpha)
        .cloned()
        .expect("beam search always retains at least one hypothesis")
}

/// Highest-scoring hypothesis; exact ties go to the lexicographically
/// smallest token sequence so selection is a total order.
fn best_by_score(pool: &[BeamHypothesis], alpha: f64) -> Option<&BeamHypothesis> {
    pool.iter().max_by(|a, b| {
        a.score(alpha).total_cmp(&b.score(alpha)).then_with(|| b.tokens.cmp(&a.tokens))
    })
}

// ── corpus-level drivers ──

/// Decodes one example with one model.
pub fn translate_example(
    model: &Model,
    ex: &TrainingExample,
    params: &BeamParams,
) -> Result<BeamHypothesis> {
    let state = DecodeState::prepare(model, ex)?;
    Ok(beam_search(&state, ex.src.len(), params))
}

/// Decodes one example with a weighted ensemble of models sharing a
/// vocabulary.
pub fn translate_example_ensemble(
    members: &[(&Model, f64)],
    ex: &TrainingExample,
    params: &BeamParams,
) -> Result<BeamHypothesis> {
    let states = members
        .iter()
        .map(|(m, w)| Ok((DecodeState::prepare(m, ex)?, *w)))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = EnsembleScorer::new(states)?;
    Ok(beam_search(&ensemble, ex.src.len(), params))
}

/// Decodes a corpus sentence-by-sentence, preserving input order.
pub fn translate_corpus(
    model: &Model,
    examples: &[TrainingExample],
    params: &BeamParams,
) -> Result<Vec<BeamHypothesis>> {
    examples.iter().map(|ex| translate_example(model, ex, params)).collect()
}

/// Ensemble analog of [`translate_corpus`].
pub fn translate_corpus_ensemble(
    members: &[(&Model, f64)],
    examples: &[TrainingExample],
    params: &BeamParams,
) -> Result<Vec<BeamHypothesis>> {
    examples.iter().map(|ex| translate_example_ensemble(members, ex, params)).collect()
}

/// Whitespace-joined surface form of a hypothesis.
pub fn surface_text(vocab: &Vocabulary, hyp: &BeamHypothesis) -> String {
    hyp.surface().iter().map(|&id| vocab.token(id)).collect::<Vec<_>>().join(" ")
}

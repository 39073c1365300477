//! Corpus-level BLEU on detokenized text, decomposed into per-sentence
//! n-gram statistics so bootstrap resampling can reuse them.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Clipped n-gram matches and totals for one hypothesis/reference pair.
/// Summing these over any multiset of sentences yields that set's BLEU.
#[derive(Clone, Debug)]
pub struct SentenceStats {
    /// matches[n-1] = clipped n-gram matches.
    pub matches: Vec<usize>,
    /// totals[n-1] = hypothesis n-gram count.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// A corpus BLEU score with its ingredients.
#[derive(Clone, Debug)]
pub struct BleuScore {
    /// 0..=100.
    pub score: f64,
    /// Modified n-gram precisions, n = 1..=max_n.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[&str], n: usize) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    counts
}

/// Per-sentence statistics against a single reference.
pub fn sentence_stats(hypothesis: &str, reference: &str, max_n: usize) -> SentenceStats {
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let reference: Vec<&str> = reference.split_whitespace().collect();
    let mut matches = Vec::with_capacity(max_n);
    let mut totals = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let hyp_counts = ngram_counts(&hyp, n);
        let ref_counts = ngram_counts(&reference, n);
        let m: usize = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        matches.push(m);
        totals.push(hyp.len().saturating_sub(n - 1));
    }
    SentenceStats { matches, totals, hyp_len: hyp.len(), ref_len: reference.len() }
}

/// Combines sentence statistics into one corpus score: geometric mean of the
/// modified precisions times the brevity penalty. No smoothing: any empty
/// precision zeroes the score.
pub fn combine_stats<'a, I: IntoIterator<Item = &'a SentenceStats>>(
    stats: I,
    max_n: usize,
) -> BleuScore {
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for s in stats {
        for n in 0..max_n {
            matches[n] += s.matches[n];
            totals[n] += s.totals[n];
        }
        hyp_len += s.hyp_len;
        ref_len += s.ref_len;
    }
    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    BleuScore { score, precisions, brevity_penalty, hyp_len, ref_len }
}

/// Corpus BLEU over aligned hypothesis and reference lines.
pub fn corpus_bleu(hypotheses: &[String], references: &[String], max_n: usize) -> Result<BleuScore> {
    if hypotheses.is_empty() {
        return Err(Error::Invalid("BLEU over an empty hypothesis set".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "BLEU needs aligned corpora: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Invalid("BLEU needs max_n >= 1".into()));
    }
    let stats: Vec<SentenceStats> = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| sentence_stats(h, r, max_n))
        .collect();
    Ok(combine_stats(&stats, max_n))
}

//! Paired bootstrap resampling for BLEU significance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bleu::{combine_stats, corpus_bleu, sentence_stats, SentenceStats};
use crate::error::{Error, Result};

/// Outcome of one paired comparison of system B against system A.
#[derive(Clone, Debug)]
pub struct BootstrapResult {
    /// Fraction of resamples in which B's BLEU >= A's (ties count for B).
    pub p_value: f64,
    /// Fraction of resamples in which B's BLEU > A's strictly; ties support
    /// no difference, so significance is judged on this tail.
    pub strict_wins: f64,
    /// Full-corpus BLEU of system A.
    pub bleu_a: f64,
    /// Full-corpus BLEU of system B.
    pub bleu_b: f64,
    pub resamples: usize,
}

impl BootstrapResult {
    /// B strictly beats A in at least 95% of resamples.
    pub fn significant_05(&self) -> bool {
        self.strict_wins >= 0.95
    }

    /// B strictly beats A in at least 99% of resamples (double dagger).
    pub fn significant_01(&self) -> bool {
        self.strict_wins >= 0.99
    }
}

/// Resamples test-set indices with replacement and reports the fraction of
/// resamples where system B's BLEU is at least system A's. Ties count for B,
/// so comparing a system against itself reports p = 1 (no difference).
pub fn paired_bootstrap(
    hyp_a: &[String],
    hyp_b: &[String],
    refs: &[String],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if hyp_a.len() != hyp_b.len() || hyp_a.len() != refs.len() {
        return Err(Error::Invalid(format!(
            "paired bootstrap needs aligned corpora: {} vs {} vs {} lines",
            hyp_a.len(),
            hyp_b.len(),
            refs.len()
        )));
    }
    if resamples == 0 {
        return Err(Error::Invalid("paired bootstrap needs at least one resample".into()));
    }
    const MAX_N: usize = 4;
    let bleu_a = corpus_bleu(hyp_a, refs, MAX_N)?.score;
    let bleu_b = corpus_bleu(hyp_b, refs, MAX_N)?.score;

    let stats_a: Vec<SentenceStats> =
        hyp_a.iter().zip(refs).map(|(h, r)| sentence_stats(h, r, MAX_N)).collect();
    let stats_b: Vec<SentenceStats> =
        hyp_b.iter().zip(refs).map(|(h, r)| sentence_stats(h, r, MAX_N)).collect();

    let n = refs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b_at_least = 0usize;
    let mut b_strict = 0usize;
    let mut indices = vec![0usize; n];
    for _ in 0..resamples {
        for slot in indices.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        let score_a = combine_stats(indices.iter().map(|&i| &stats_a[i]), MAX_N).score;
        let score_b = combine_stats(indices.iter().map(|&i| &stats_b[i]), MAX_N).score;
        b_at_least += (score_b >= score_a) as usize;
        b_strict += (score_b > score_a) as usize;
    }
    Ok(BootstrapResult {
        p_value: b_at_least as f64 / resamples as f64,
        strict_wins: b_strict as f64 / resamples as f64,
        bleu_a,
        bleu_b,
        resamples,
    })
}

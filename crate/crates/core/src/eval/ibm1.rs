//! IBM Model 1 lexical translation probabilities, trained with EM, plus
//! forced alignment. No NULL word; deterministic accumulation order.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// t(target | source) table over interned vocabularies.
pub struct Ibm1 {
    src_vocab: IndexMap<String, usize>,
    tgt_vocab: IndexMap<String, usize>,
    /// t[src_id][tgt_id], each row summing to 1 over its support.
    t: Vec<BTreeMap<usize, f64>>,
    /// Training log-likelihood after each EM iteration.
    pub log_likelihoods: Vec<f64>,
}

/// One source token's forced alignment: the chosen target index and whether
/// the source token was out of vocabulary (aligned uniformly).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlignedToken {
    pub target_index: usize,
    pub oov: bool,
}

fn tokenize(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

impl Ibm1 {
    /// Trains on whitespace-tokenized (source, target) line pairs with the
    /// given number of EM iterations, starting from a uniform table over
    /// each source word's co-occurring targets.
    pub fn train(pairs: &[(String, String)], iterations: usize) -> Result<Ibm1> {
        if pairs.is_empty() {
            return Err(Error::Invalid("IBM-1 needs a nonempty training corpus".into()));
        }
        let mut src_vocab: IndexMap<String, usize> = IndexMap::new();
        let mut tgt_vocab: IndexMap<String, usize> = IndexMap::new();
        let mut sentences: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(pairs.len());
        for (src_line, tgt_line) in pairs {
            let src: Vec<usize> = tokenize(src_line)
                .into_iter()
                .map(|w| intern(&mut src_vocab, w))
                .collect();
            let tgt: Vec<usize> = tokenize(tgt_line)
                .into_iter()
                .map(|w| intern(&mut tgt_vocab, w))
                .collect();
            if !src.is_empty() && !tgt.is_empty() {
                sentences.push((src, tgt));
            }
        }
        if sentences.is_empty() {
            return Err(Error::Invalid("IBM-1 corpus has no usable sentence pairs".into()));
        }

        // Uniform initialization over each source word's observed targets.
        let mut t: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); src_vocab.len()];
        for (src, tgt) in &sentences {
            for &e in src {
                for &f in tgt {
                    t[e].insert(f, 1.0);
                }
            }
        }
        for row in t.iter_mut() {
            let inv = 1.0 / row.len() as f64;
            for v in row.values_mut() {
                *v = inv;
            }
        }

        let mut log_likelihoods = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); src_vocab.len()];
            let mut ll = 0.0;
            for (src, tgt) in &sentences {
                for &f in tgt {
                    let denom: f64 = src.iter().map(|&e| t[e].get(&f).copied().unwrap_or(0.0)).sum();
                    ll += denom.ln() - (src.len() as f64).ln();
                    for &e in src {
                        let p = t[e].get(&f).copied().unwrap_or(0.0);
                        if p > 0.0 {
                            *counts[e].entry(f).or_insert(0.0) += p / denom;
                        }
                    }
                }
            }
            for (row, count_row) in t.iter_mut().zip(&counts) {
                let total: f64 = count_row.values().sum();
                if total > 0.0 {
                    *row = count_row.iter().map(|(&f, &c)| (f, c / total)).collect();
                }
            }
            log_likelihoods.push(ll);
        }
        Ok(Ibm1 { src_vocab, tgt_vocab, t, log_likelihoods })
    }

    /// t(target_word | source_word); 0 for unseen pairs or words.
    pub fn prob(&self, source_word: &str, target_word: &str) -> f64 {
        let (Some(&e), Some(&f)) =
            (self.src_vocab.get(source_word), self.tgt_vocab.get(target_word))
        else {
            return 0.0;
        };
        self.t[e].get(&f).copied().unwrap_or(0.0)
    }

    /// Per-row probability sums, for checking normalization.
    pub fn row_sums(&self) -> Vec<f64> {
        self.t.iter().map(|row| row.values().sum()).collect()
    }

    /// Aligns each source token to the in-sentence target with the highest
    /// translation probability; ties and unseen sources go to the leftmost
    /// candidate, the latter flagged as OOV. Returns None when either side
    /// is empty.
    pub fn force_align(&self, source_line: &str, target_line: &str) -> Option<Vec<AlignedToken>> {
        let src = tokenize(source_line);
        let tgt = tokenize(target_line);
        if src.is_empty() || tgt.is_empty() {
            return None;
        }
        Some(
            src.iter()
                .map(|word| match self.src_vocab.get(*word) {
                    None => AlignedToken { target_index: 0, oov: true },
                    Some(&e) => {
                        let mut best = (0usize, f64::NEG_INFINITY);
                        for (j, f_word) in tgt.iter().enumerate() {
                            let p = self
                                .tgt_vocab
                                .get(*f_word)
                                .and_then(|f| self.t[e].get(f))
                                .copied()
                                .unwrap_or(0.0);
                            if p > best.1 {
                                best = (j, p);
                            }
                        }
                        AlignedToken { target_index: best.0, oov: false }
                    }
                })
                .collect(),
        )
    }
}

fn intern(vocab: &mut IndexMap<String, usize>, word: &str) -> usize {
    if let Some(&id) = vocab.get(word) {
        return id;
    }
    let id = vocab.len();
    vocab.insert(word.to_string(), id);
    id
}

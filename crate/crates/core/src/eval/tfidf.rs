//! TF-IDF extraction of domain-characteristic words.

use indexmap::{IndexMap, IndexSet};

use crate::error::{Error, Result};

/// The TF-IDF-ranked characteristic words of one domain.
#[derive(Clone, Debug)]
pub struct DomainWords {
    pub domain: String,
    /// (word, tf-idf score), sorted by descending score; ties by word.
    pub words: Vec<(String, f64)>,
}

impl DomainWords {
    pub fn tokens(&self) -> Vec<String> {
        self.words.iter().map(|(w, _)| w.clone()).collect()
    }
}

/// Ranks words per domain by tf·idf, where tf is the raw count inside the
/// domain's concatenated text and idf = ln(D / d_w) over the D domains.
/// Words shorter than `min_len` characters or present in every domain
/// (idf = 0) never qualify.
pub fn tfidf_domain_words(
    texts_by_domain: &[(String, String)],
    top_k: usize,
    min_len: usize,
) -> Result<Vec<DomainWords>> {
    let d = texts_by_domain.len();
    if d < 2 {
        return Err(Error::Invalid(format!(
            "tf-idf needs at least 2 domains to contrast, got {d}"
        )));
    }
    let counts: Vec<IndexMap<&str, usize>> = texts_by_domain
        .iter()
        .map(|(_, text)| {
            let mut c: IndexMap<&str, usize> = IndexMap::new();
            for token in text.split_whitespace() {
                *c.entry(token).or_insert(0) += 1;
            }
            c
        })
        .collect();
    let mut doc_freq: IndexMap<&str, usize> = IndexMap::new();
    for c in &counts {
        let present: IndexSet<&str> = c.keys().copied().collect();
        for word in present {
            *doc_freq.entry(word).or_insert(0) += 1;
        }
    }

    Ok(texts_by_domain
        .iter()
        .zip(&counts)
        .map(|((domain, _), count)| {
            let mut words: Vec<(String, f64)> = count
                .iter()
                .filter(|(w, _)| w.chars().count() >= min_len)
                .map(|(w, &tf)| {
                    let idf = (d as f64 / doc_freq[w] as f64).ln();
                    (w.to_string(), tf as f64 * idf)
                })
                .filter(|(_, score)| *score > 0.0)
                .collect();
            words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            words.truncate(top_k);
            DomainWords { domain: domain.clone(), words }
        })
        .collect())
}

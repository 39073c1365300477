//! Joint word-level vocabulary with reserved symbols and domain tags.
//!
//! Ids 0..=4 are the fixed specials, ids 5..5+K are the K domain-tag symbols
//! (one per training domain, in first-appearance order), and everything after
//! that is corpus words sorted by descending frequency with lexicographic
//! tie-breaks. The on-disk format is one token per line; the line number is
//! the id.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::corpus::Document;
use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const SEP_ID: TokenId = 3;
pub const UNK_ID: TokenId = 4;

pub const PAD_TOKEN: &str = "<PAD>";
pub const BOS_TOKEN: &str = "<BOS>";
pub const EOS_TOKEN: &str = "<EOS>";
pub const SEP_TOKEN: &str = "<SEP>";
pub const UNK_TOKEN: &str = "<UNK>";

const SPECIALS: [&str; 5] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, SEP_TOKEN, UNK_TOKEN];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    /// Training-domain names, aligned with tag ids 5..5+K.
    domains: Vec<String>,
}

impl Vocabulary {
    /// Builds the joint source+target vocabulary of a training corpus. One
    /// tag symbol `<domain>` is reserved per distinct document domain, in
    /// first-appearance order.
    pub fn build(documents: &[Document]) -> Vocabulary {
        let mut domains: Vec<String> = Vec::new();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in documents {
            if !domains.contains(&doc.domain) {
                domains.push(doc.domain.clone());
            }
            for (src, tgt) in &doc.sentences {
                for tok in src.iter().chain(tgt) {
                    *counts.entry(tok.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut words: Vec<(&str, u64)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(domains.iter().map(|d| tag_symbol(d)));
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Vocabulary::from_tokens(tokens, domains)
    }

    fn from_tokens(tokens: Vec<String>, domains: Vec<String>) -> Vocabulary {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, domains }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    /// Id of a token, or the <UNK> id for out-of-vocabulary words.
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id of a token only if it is actually in the vocabulary.
    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    /// Tag id for a training domain, if the domain was seen at build time.
    pub fn domain_tag(&self, domain: &str) -> Option<TokenId> {
        self.domains.iter().position(|d| d == domain).map(|i| SPECIALS.len() + i)
    }

    /// True for specials and domain tags, false for corpus words.
    pub fn is_reserved(&self, id: TokenId) -> bool {
        id < SPECIALS.len() + self.domains.len()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Renders ids back to tokens, skipping nothing; callers strip frame
    /// symbols themselves where appropriate.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = String::new();
        for tok in &self.tokens {
            buf.push_str(tok);
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        for (i, expect) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*expect) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected reserved symbol {:?}", expect),
                });
            }
        }
        // Domain tags are written contiguously after the specials; recover
        // them by shape. Corpus words never look like <...> because build()
        // takes them from whitespace-split synthetic/natural text.
        let mut domains = Vec::new();
        for tok in tokens.iter().skip(SPECIALS.len()) {
            match tok.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
                Some(inner) if !SPECIALS.contains(&tok.as_str()) => {
                    domains.push(inner.to_string());
                }
                _ => break,
            }
        }
        Ok(Vocabulary::from_tokens(tokens, domains))
    }
}

/// The tag symbol reserved for a domain, e.g. `<dom3>` for domain `dom3`.
pub fn tag_symbol(domain: &str) -> String {
    format!("<{}>", domain)
}

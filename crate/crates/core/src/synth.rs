//! Deterministic generator of multi-domain document corpora with
//! controllable domain-dependent polysemy.
//!
//! Every sentence mixes three word classes: shared function words that carry
//! no domain signal, domain-exclusive content words that are the signal, and
//! polysemous words whose correct translation depends on the enclosing
//! document's domain. A configurable fraction of polysemous occurrences is
//! sentence-ambiguous: the sentence itself contains no exclusive word, so
//! only surrounding document context can resolve the sense. The held-out
//! domain mixes two training domains' content vocabularies and reuses their
//! senses; nothing about it is unseen except the combination, which is what
//! makes it zero-resource rather than merely low-resource.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Document;
use crate::error::{Error, Result};

// ── configuration ──

/// The zero-resource domain: a fixed mixture of two training domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldoutSpec {
    pub name: String,
    /// The two training domains whose vocabularies the held-out domain mixes.
    pub mix: (String, String),
    /// Probability that a held-out document leans on `mix.0` rather than
    /// `mix.1` as its dominant domain.
    pub doc_mix: f64,
    /// Within one document, probability that an exclusive-word draw comes
    /// from the dominant rather than the minor mixture domain.
    pub token_mix: f64,
}

/// Documents generated per training domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Documents generated for the held-out domain. The fine-tune splits exist
/// for the adaptation-by-fine-tuning scenario and may be zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldoutCounts {
    pub test: usize,
    pub finetune_train: usize,
    pub finetune_dev: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub train_domains: Vec<String>,
    pub heldout: HeldoutSpec,
    pub exclusive_per_domain: usize,
    pub shared_words: usize,
    pub polysemous_words: usize,
    pub split: SplitCounts,
    pub heldout_split: HeldoutCounts,
    /// Inclusive range of sentences per document.
    pub sents_per_doc: (usize, usize),
    /// Inclusive range of source tokens per sentence.
    pub sent_len: (usize, usize),
    /// Probability that a non-anchor sentence carries one polysemous word.
    pub p_polysemous: f64,
    /// Probability that a polysemy-carrying sentence suppresses every
    /// exclusive word, leaving the sentence alone unable to pick the sense.
    pub p_ambiguous: f64,
    /// Per-token exclusive rate wherever exclusive words are allowed.
    pub p_exclusive_token: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Default desk-scale corpus: three training domains plus one held-out
    /// mixture domain, small enough to train on a CPU in minutes while
    /// keeping per-sentence ambiguity real.
    pub fn desk(seed: u64) -> SynthConfig {
        SynthConfig {
            train_domains: vec!["alpha".into(), "beta".into(), "gamma".into()],
            heldout: HeldoutSpec {
                name: "zeta".into(),
                mix: ("alpha".into(), "beta".into()),
                doc_mix: 0.6,
                token_mix: 0.75,
            },
            exclusive_per_domain: 60,
            shared_words: 40,
            polysemous_words: 10,
            split: SplitCounts { train: 170, dev: 15, test: 15 },
            heldout_split: HeldoutCounts { test: 40, finetune_train: 80, finetune_dev: 15 },
            sents_per_doc: (8, 15),
            sent_len: (5, 12),
            // A high polysemy rate gives sense decisions enough statistical
            // mass that context-use margins are measurable after short runs.
            p_polysemous: 0.8,
            p_ambiguous: 0.65,
            p_exclusive_token: 0.4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.train_domains.len() < 2 {
            return bad("need at least two training domains to build a mixture".into());
        }
        let mut seen = HashSet::new();
        for name in self.train_domains.iter().chain([&self.heldout.name]) {
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains("|||") {
                return bad(format!("domain name {name:?} is not a valid corpus label"));
            }
            if !seen.insert(name.as_str()) {
                return bad(format!("domain name {name:?} is used twice"));
            }
        }
        let (a, b) = (&self.heldout.mix.0, &self.heldout.mix.1);
        if a == b {
            return bad("held-out mixture must combine two distinct domains".into());
        }
        for d in [a, b] {
            if !self.train_domains.contains(d) {
                return bad(format!("held-out mixture references unknown domain {d:?}"));
            }
        }
        for (label, p) in [
            ("doc_mix", self.heldout.doc_mix),
            ("token_mix", self.heldout.token_mix),
            ("p_polysemous", self.p_polysemous),
            ("p_ambiguous", self.p_ambiguous),
            ("p_exclusive_token", self.p_exclusive_token),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{label} = {p} is not a probability"));
            }
        }
        for (label, n) in [
            ("exclusive_per_domain", self.exclusive_per_domain),
            ("shared_words", self.shared_words),
            ("polysemous_words", self.polysemous_words),
            ("split.train", self.split.train),
            ("split.dev", self.split.dev),
            ("split.test", self.split.test),
            ("heldout_split.test", self.heldout_split.test),
        ] {
            if n == 0 {
                return bad(format!("{label} must be at least 1"));
            }
        }
        for (label, (lo, hi)) in
            [("sents_per_doc", self.sents_per_doc), ("sent_len", self.sent_len)]
        {
            if lo > hi {
                return bad(format!("{label} range ({lo}, {hi}) is reversed"));
            }
        }
        if self.sents_per_doc.0 < 2 {
            return bad("documents need at least 2 sentences so polysemy can occur".into());
        }
        if self.sent_len.0 < 3 {
            return bad("sentences need at least 3 tokens to fit anchors and cues".into());
        }
        Ok(())
    }
}

// ── lexicon ──

/// Class of a source word, recoverable from the lexicon for any generated
/// token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WordKind {
    /// Content word appearing only in one training domain's documents.
    Exclusive(String),
    /// Function word appearing in every domain.
    Shared,
    /// Word whose target translation depends on the document's domain.
    Polysemous,
}

/// The generated vocabulary. Targets are deterministic per word: a regular
/// word `w` translates to `w_t`; a polysemous word translates to its
/// domain-conditioned sense.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub domains: Vec<String>,
    /// Exclusive content words, parallel to `domains`.
    pub exclusive: Vec<Vec<String>>,
    pub shared: Vec<String>,
    pub polysemous: Vec<String>,
    /// Polysemous source word -> domain -> target sense.
    pub senses: BTreeMap<String, BTreeMap<String, String>>,
    kinds: HashMap<String, WordKind>,
}

impl Lexicon {
    fn build(cfg: &SynthConfig) -> Lexicon {
        let domains = cfg.train_domains.clone();
        let mut kinds = HashMap::new();
        let exclusive: Vec<Vec<String>> = domains
            .iter()
            .map(|d| {
                (0..cfg.exclusive_per_domain)
                    .map(|i| {
                        let w = format!("{d}_x{i:02}");
                        kinds.insert(w.clone(), WordKind::Exclusive(d.clone()));
                        w
                    })
                    .collect()
            })
            .collect();
        let shared: Vec<String> = (0..cfg.shared_words)
            .map(|i| {
                let w = format!("sh_{i:02}");
                kinds.insert(w.clone(), WordKind::Shared);
                w
            })
            .collect();
        let mut senses = BTreeMap::new();
        let polysemous: Vec<String> = (0..cfg.polysemous_words)
            .map(|i| {
                let w = format!("py_{i}");
                kinds.insert(w.clone(), WordKind::Polysemous);
                let per_domain: BTreeMap<String, String> =
                    domains.iter().map(|d| (d.clone(), format!("{w}_{d}"))).collect();
                senses.insert(w.clone(), per_domain);
                w
            })
            .collect();
        Lexicon { domains, exclusive, shared, polysemous, senses, kinds }
    }

    pub fn kind(&self, word: &str) -> Option<&WordKind> {
        self.kinds.get(word)
    }

    /// The owning domain when `word` is exclusive.
    pub fn exclusive_domain(&self, word: &str) -> Option<&str> {
        match self.kinds.get(word) {
            Some(WordKind::Exclusive(d)) => Some(d),
            _ => None,
        }
    }

    pub fn is_polysemous(&self, word: &str) -> bool {
        matches!(self.kinds.get(word), Some(WordKind::Polysemous))
    }

    pub fn exclusive_pool(&self, domain: &str) -> &[String] {
        let idx = self
            .domains
            .iter()
            .position(|d| d == domain)
            .expect("exclusive pool requested for an unknown domain");
        &self.exclusive[idx]
    }

    pub fn gold_sense(&self, word: &str, domain: &str) -> Option<&str> {
        self.senses.get(word).and_then(|per| per.get(domain)).map(String::as_str)
    }

    /// Target-side translation of `word` under `sense_domain`.
    pub fn target_of(&self, word: &str, sense_domain: &str) -> String {
        match self.gold_sense(word, sense_domain) {
            Some(sense) => sense.to_string(),
            None => format!("{word}_t"),
        }
    }
}

// ── oracle record ──

/// One polysemous token occurrence and its domain-correct target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleEntry {
    pub doc_id: String,
    /// Sentence index within the document.
    pub sentence: usize,
    /// Token index within the source sentence.
    pub token: usize,
    pub word: String,
    pub gold: String,
}

pub const ORACLE_TSV_HEADER: &str = "doc_id\tsentence\ttoken\tword\tgold";

impl OracleEntry {
    pub fn tsv_line(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.doc_id, self.sentence, self.token, self.word, self.gold)
    }
}

pub fn save_oracle(path: &Path, entries: &[OracleEntry]) -> Result<()> {
    let mut buf = String::from(ORACLE_TSV_HEADER);
    buf.push('\n');
    for e in entries {
        buf.push_str(&e.tsv_line());
        buf.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_oracle(path: &Path) -> Result<Vec<OracleEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_oracle_tsv(&text, &path.display().to_string())
}

pub fn parse_oracle_tsv(text: &str, origin: &str) -> Result<Vec<OracleEntry>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == ORACLE_TSV_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header {ORACLE_TSV_HEADER:?}"))),
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let number = |f: &str| {
            f.parse::<usize>().map_err(|_| parse_err(idx + 1, format!("bad index {f:?}")))
        };
        entries.push(OracleEntry {
            doc_id: fields[0].to_string(),
            sentence: number(fields[1])?,
            token: number(fields[2])?,
            word: fields[3].to_string(),
            gold: fields[4].to_string(),
        });
    }
    Ok(entries)
}

// ── corpus ──

/// A generated corpus: per-domain splits for the training domains plus the
/// held-out domain's test and optional fine-tune material, with an oracle
/// record of every polysemous occurrence across all splits.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub lexicon: Lexicon,
    pub train: Vec<(String, Vec<Document>)>,
    pub dev: Vec<(String, Vec<Document>)>,
    pub test: Vec<(String, Vec<Document>)>,
    pub heldout_test: Vec<Document>,
    pub finetune_train: Vec<Document>,
    pub finetune_dev: Vec<Document>,
    pub oracle: Vec<OracleEntry>,
}

impl SynthCorpus {
    pub fn train_documents(&self) -> Vec<Document> {
        self.train.iter().flat_map(|(_, docs)| docs.iter().cloned()).collect()
    }

    pub fn dev_documents(&self) -> Vec<Document> {
        self.dev.iter().flat_map(|(_, docs)| docs.iter().cloned()).collect()
    }

    /// Test documents of the training domains, excluding the held-out domain.
    pub fn test_documents(&self) -> Vec<Document> {
        self.test.iter().flat_map(|(_, docs)| docs.iter().cloned()).collect()
    }
}

// ── generation ──

/// How one document draws its words: which label it carries, whose senses
/// gold-label its polysemous words, and which exclusive pools feed it.
struct DocPlan<'a> {
    label: &'a str,
    sense_domain: &'a str,
    dominant: &'a [String],
    minor: Option<&'a [String]>,
    dominant_weight: f64,
}

impl DocPlan<'_> {
    fn draw_exclusive(&self, rng: &mut ChaCha8Rng) -> &str {
        let pool = match self.minor {
            Some(minor) if !rng.gen_bool(self.dominant_weight) => minor,
            _ => self.dominant,
        };
        &pool[rng.gen_range(0..pool.len())]
    }
}

fn draw_shared<'a>(rng: &mut ChaCha8Rng, lex: &'a Lexicon) -> &'a str {
    &lex.shared[rng.gen_range(0..lex.shared.len())]
}

/// Overwrites shared slots with fresh exclusive draws until the sentence
/// holds at least `want` exclusive words. Slot choice is random so forced
/// cues carry no position bias. The minimum sentence length guarantees a
/// shared slot exists whenever the count is short.
fn ensure_exclusives(
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
    plan: &DocPlan,
    tokens: &mut [String],
    want: usize,
) {
    let mut have = tokens.iter().filter(|t| lex.exclusive_domain(t).is_some()).count();
    if have >= want {
        return;
    }
    let mut shared_slots: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(lex.kind(t), Some(WordKind::Shared)))
        .map(|(i, _)| i)
        .collect();
    while have < want {
        let pick = rng.gen_range(0..shared_slots.len());
        let slot = shared_slots.swap_remove(pick);
        tokens[slot] = plan.draw_exclusive(rng).to_string();
        have += 1;
    }
}

/// Generates one source sentence; returns the tokens and the polysemous slot
/// if the sentence carries one. Anchor sentences (document-initial) are
/// polysemy-free and hold at least two exclusive words, so every later
/// sentence in the document has a domain cue within reach of its context.
fn gen_sentence(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    lex: &Lexicon,
    plan: &DocPlan,
    anchor: bool,
) -> (Vec<String>, Option<(usize, String)>) {
    let len = rng.gen_range(cfg.sent_len.0..=cfg.sent_len.1);
    let mut tokens: Vec<String> = Vec::with_capacity(len);
    if anchor {
        for _ in 0..len {
            if rng.gen_bool(0.5) {
                tokens.push(plan.draw_exclusive(rng).to_string());
            } else {
                tokens.push(draw_shared(rng, lex).to_string());
            }
        }
        ensure_exclusives(rng, lex, plan, &mut tokens, 2);
        return (tokens, None);
    }
    let poly = if rng.gen_bool(cfg.p_polysemous) {
        let word = lex.polysemous[rng.gen_range(0..lex.polysemous.len())].clone();
        let slot = rng.gen_range(0..len);
        Some((slot, word))
    } else {
        None
    };
    let ambiguous = poly.is_some() && rng.gen_bool(cfg.p_ambiguous);
    for i in 0..len {
        if let Some((slot, word)) = &poly {
            if i == *slot {
                tokens.push(word.clone());
                continue;
            }
        }
        if !ambiguous && rng.gen_bool(cfg.p_exclusive_token) {
            tokens.push(plan.draw_exclusive(rng).to_string());
        } else {
            tokens.push(draw_shared(rng, lex).to_string());
        }
    }
    if !ambiguous {
        ensure_exclusives(rng, lex, plan, &mut tokens, 1);
    }
    (tokens, poly)
}

fn gen_document(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    lex: &Lexicon,
    plan: &DocPlan,
    doc_id: String,
    oracle: &mut Vec<OracleEntry>,
) -> Document {
    let n = rng.gen_range(cfg.sents_per_doc.0..=cfg.sents_per_doc.1);
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let (src, poly) = gen_sentence(rng, cfg, lex, plan, i == 0);
        let tgt: Vec<String> = src.iter().map(|w| lex.target_of(w, plan.sense_domain)).collect();
        if let Some((slot, word)) = poly {
            let gold = lex
                .gold_sense(&word, plan.sense_domain)
                .expect("every polysemous word has a sense in every training domain")
                .to_string();
            oracle.push(OracleEntry { doc_id: doc_id.clone(), sentence: i, token: slot, word, gold });
        }
        sentences.push((src, tgt));
    }
    Document { doc_id, domain: plan.label.to_string(), sentences }
}

/// Folds a split tag into the master seed so each (domain, split) stream is
/// independently deterministic and generation could proceed per domain in
/// parallel with a plain concatenation merge.
fn subseed(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn gen_training_split(
    cfg: &SynthConfig,
    lex: &Lexicon,
    domain: &str,
    split: &str,
    count: usize,
    oracle: &mut Vec<OracleEntry>,
) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &format!("{domain}/{split}")));
    let plan = DocPlan {
        label: domain,
        sense_domain: domain,
        dominant: lex.exclusive_pool(domain),
        minor: None,
        dominant_weight: 1.0,
    };
    (0..count)
        .map(|i| gen_document(&mut rng, cfg, lex, &plan, format!("{domain}-{split}-{i:03}"), oracle))
        .collect()
}

fn gen_heldout_split(
    cfg: &SynthConfig,
    lex: &Lexicon,
    split: &str,
    count: usize,
    oracle: &mut Vec<OracleEntry>,
) -> Vec<Document> {
    let name = &cfg.heldout.name;
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &format!("{name}/{split}")));
    (0..count)
        .map(|i| {
            let (dom, minor) = if rng.gen_bool(cfg.heldout.doc_mix) {
                (&cfg.heldout.mix.0, &cfg.heldout.mix.1)
            } else {
                (&cfg.heldout.mix.1, &cfg.heldout.mix.0)
            };
            let plan = DocPlan {
                label: name,
                sense_domain: dom,
                dominant: lex.exclusive_pool(dom),
                minor: Some(lex.exclusive_pool(minor)),
                dominant_weight: cfg.heldout.token_mix,
            };
            gen_document(&mut rng, cfg, lex, &plan, format!("{name}-{split}-{i:03}"), oracle)
        })
        .collect()
}

/// Generates the full corpus. Deterministic: the same config (seed included)
/// yields an identical corpus, byte for byte once rendered.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let lexicon = Lexicon::build(cfg);
    let mut oracle = Vec::new();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for domain in &cfg.train_domains {
        let split = |name: &str, count: usize, oracle: &mut Vec<OracleEntry>| {
            gen_training_split(cfg, &lexicon, domain, name, count, oracle)
        };
        train.push((domain.clone(), split("train", cfg.split.train, &mut oracle)));
        dev.push((domain.clone(), split("dev", cfg.split.dev, &mut oracle)));
        test.push((domain.clone(), split("test", cfg.split.test, &mut oracle)));
    }
    let heldout_test =
        gen_heldout_split(cfg, &lexicon, "test", cfg.heldout_split.test, &mut oracle);
    let finetune_train =
        gen_heldout_split(cfg, &lexicon, "ft-train", cfg.heldout_split.finetune_train, &mut oracle);
    let finetune_dev =
        gen_heldout_split(cfg, &lexicon, "ft-dev", cfg.heldout_split.finetune_dev, &mut oracle);
    Ok(SynthCorpus {
        lexicon,
        train,
        dev,
        test,
        heldout_test,
        finetune_train,
        finetune_dev,
        oracle,
    })
}

// ── oracle scoring ──

/// Disambiguation accuracy of hypotheses against the oracle record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleScore {
    pub accuracy: f64,
    pub matched: usize,
    pub total: usize,
}

/// Fraction of polysemous occurrences in `documents` whose domain-correct
/// target word appears anywhere in the corresponding hypothesis line.
/// `hypotheses` must hold one line per sentence of `documents`, flattened in
/// document order; oracle entries for other documents are ignored.
pub fn oracle_disambiguation_score(
    documents: &[Document],
    hypotheses: &[String],
    oracle: &[OracleEntry],
) -> Result<OracleScore> {
    let mut line_of: HashMap<(&str, usize), usize> = HashMap::new();
    let mut lines = 0usize;
    for doc in documents {
        for s in 0..doc.sentences.len() {
            line_of.insert((doc.doc_id.as_str(), s), lines);
            lines += 1;
        }
    }
    if lines != hypotheses.len() {
        return Err(Error::Invalid(format!(
            "{} hypotheses for {} scored sentences",
            hypotheses.len(),
            lines
        )));
    }
    let mut total = 0usize;
    let mut matched = 0usize;
    for entry in oracle {
        let Some(&line) = line_of.get(&(entry.doc_id.as_str(), entry.sentence)) else {
            continue;
        };
        total += 1;
        if hypotheses[line].split_whitespace().any(|t| t == entry.gold) {
            matched += 1;
        }
    }
    if total == 0 {
        return Err(Error::Invalid(
            "no polysemous occurrences fall inside the scored documents".into(),
        ));
    }
    Ok(OracleScore { accuracy: matched as f64 / total as f64, matched, total })
}

// ── ambiguity diagnostics ──

/// How hard the corpus actually is: per polysemous occurrence, whether its
/// own sentence carries a domain cue and whether the preceding-k context
/// does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbiguityStats {
    pub occurrences: usize,
    /// Fraction whose sentence contains no exclusive word.
    pub sentence_ambiguous: f64,
    /// Fraction whose preceding-k source context contains an exclusive word.
    pub context_covered: f64,
}

pub fn ambiguity_stats(documents: &[Document], lexicon: &Lexicon, k: usize) -> AmbiguityStats {
    let has_cue =
        |sent: &[String]| sent.iter().any(|t| lexicon.exclusive_domain(t).is_some());
    let mut occurrences = 0usize;
    let mut ambiguous = 0usize;
    let mut covered = 0usize;
    for doc in documents {
        for (i, (src, _)) in doc.sentences.iter().enumerate() {
            let n_poly = src.iter().filter(|t| lexicon.is_polysemous(t)).count();
            if n_poly == 0 {
                continue;
            }
            occurrences += n_poly;
            if !has_cue(src) {
                ambiguous += n_poly;
            }
            let start = i.saturating_sub(k);
            if doc.sentences[start..i].iter().any(|(s, _)| has_cue(s)) {
                covered += n_poly;
            }
        }
    }
    let frac = |n: usize| if occurrences == 0 { 0.0 } else { n as f64 / occurrences as f64 };
    AmbiguityStats {
        occurrences,
        sentence_ambiguous: frac(ambiguous),
        context_covered: frac(covered),
    }
}

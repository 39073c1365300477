//! Document-level bag-of-words domain classifier.
//!
//! Supplies predicted domain tags to the tag baseline at test time: each
//! document is an L1-normalized term-count vector over source tokens, fed
//! through a two-layer ReLU network with a softmax over the seen domains.

use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{Document, TrainingExample, Vocabulary};
use crate::model::{Checkpoint, Dtype, Parameters};
use crate::tensor::{Tape, Tensor};
use crate::train::{Adam, AdamConfig};
use crate::{Error, Result};

/// L1-normalized bag-of-words over a document's source side.
#[derive(Debug, Clone)]
pub struct DocFeature {
    pub doc_id: String,
    /// Vocabulary-sized, entries nonnegative, summing to 1 unless degenerate.
    pub counts: Vec<f64>,
    /// True when the document contributed no countable tokens.
    pub degenerate: bool,
}

/// Counts all source tokens of the document, skipping reserved symbols, and
/// L1-normalizes. An empty document yields a zero vector flagged degenerate.
pub fn featurize(doc: &Document, vocab: &Vocabulary) -> DocFeature {
    let mut counts = vec![0.0; vocab.len()];
    let mut total = 0.0;
    for (src, _) in &doc.sentences {
        for word in src {
            let id = vocab.id(word);
            if !vocab.is_reserved(id) {
                counts[id] += 1.0;
                total += 1.0;
            }
        }
    }
    if total > 0.0 {
        for c in &mut counts {
            *c /= total;
        }
    }
    DocFeature { doc_id: doc.doc_id.clone(), counts, degenerate: total == 0.0 }
}

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of documents held out for the reported accuracy.
    pub holdout_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        // Full-batch Adam moves each weight by at most ~lr per epoch, so the
        // budget must be large enough to traverse Xavier-scale inits.
        ClassifierConfig { hidden: 256, epochs: 300, lr: 1e-2, seed: 0, holdout_fraction: 0.1 }
    }
}

/// Two-layer feed-forward domain classifier over bag-of-words features.
pub struct DomainClassifier {
    pub vocab_size: usize,
    pub hidden: usize,
    /// Class index -> domain name, fixed at training time.
    pub domains: Vec<String>,
    pub params: Parameters,
}

fn init_classifier_params(vocab_size: usize, hidden: usize, k: usize, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    params.insert("cls.w1".into(), Arc::new(Tensor::xavier_uniform(vocab_size, hidden, &mut rng)));
    params.insert("cls.b1".into(), Arc::new(Tensor::zeros(&[hidden])));
    params.insert("cls.w2".into(), Arc::new(Tensor::xavier_uniform(hidden, k, &mut rng)));
    params.insert("cls.b2".into(), Arc::new(Tensor::zeros(&[k])));
    params
}

/// Mean cross-entropy of the two-layer network on a feature matrix.
/// Standalone so both training and the gradient check share one definition.
fn classifier_loss(
    tape: &mut Tape,
    params: &Parameters,
    features: &Tensor,
    labels: &[usize],
    k: usize,
) -> crate::tensor::NodeId {
    let w1 = tape.param("cls.w1", Arc::clone(&params["cls.w1"]));
    let b1 = tape.param("cls.b1", Arc::clone(&params["cls.b1"]));
    let w2 = tape.param("cls.w2", Arc::clone(&params["cls.w2"]));
    let b2 = tape.param("cls.b2", Arc::clone(&params["cls.b2"]));
    let x = tape.leaf(features.clone());
    let h = tape.matmul(x, w1);
    let h = tape.add_bias(h, b1);
    let h = tape.relu(h);
    let logits = tape.matmul(h, w2);
    let logits = tape.add_bias(logits, b2);
    let log_probs = tape.log_softmax_rows(logits);
    // One-hot pick of the gold log-probability; works for any K >= 2.
    let mut pick = vec![0.0; labels.len() * k];
    for (i, &label) in labels.iter().enumerate() {
        pick[i * k + label] = 1.0;
    }
    let mask = tape.leaf(Tensor::new(&[labels.len(), k], pick));
    let picked = tape.mul(log_probs, mask);
    let total = tape.sum_all(picked);
    tape.scale(total, -1.0 / labels.len() as f64)
}

impl DomainClassifier {
    /// Trains on (feature, class-index) pairs with a deterministic held-out
    /// split and reports (classifier, held-out accuracy). With a holdout
    /// fraction of zero the reported accuracy is over the training set.
    pub fn train(
        features: &[DocFeature],
        labels: &[usize],
        domains: Vec<String>,
        cfg: &ClassifierConfig,
    ) -> Result<(DomainClassifier, f64)> {
        if features.len() != labels.len() {
            return Err(Error::Invalid(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::Invalid("classifier training set is empty".into()));
        }
        let k = domains.len();
        let distinct: std::collections::HashSet<usize> = labels.iter().copied().collect();
        if k < 2 || distinct.len() < 2 {
            return Err(Error::Invalid(format!(
                "classifier needs at least 2 domains present, got {} of {} classes",
                distinct.len(),
                k
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Invalid(format!("label {} out of range for {} classes", bad, k)));
        }
        let vocab_size = features[0].counts.len();

        let mut order: Vec<usize> = (0..features.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9));
        let held = (features.len() as f64 * cfg.holdout_fraction).round() as usize;
        // Keep at least one example per seen class in training.
        let (eval_idx, train_idx) = order.split_at(held.min(features.len() - distinct.len()));

        let matrix = |idx: &[usize]| -> (Tensor, Vec<usize>) {
            let mut data = Vec::with_capacity(idx.len() * vocab_size);
            let mut lab = Vec::with_capacity(idx.len());
            for &i in idx {
                data.extend_from_slice(&features[i].counts);
                lab.push(labels[i]);
            }
            (Tensor::new(&[idx.len(), vocab_size], data), lab)
        };
        let (train_x, train_y) = matrix(train_idx);
        let (eval_x, eval_y) = matrix(eval_idx);

        let mut params = init_classifier_params(vocab_size, cfg.hidden, k, cfg.seed);
        let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
        for _ in 0..cfg.epochs {
            let mut tape = Tape::new(cfg.seed);
            let loss = classifier_loss(&mut tape, &params, &train_x, &train_y, k);
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Diverged {
                    step: adam.steps_taken() + 1,
                    msg: format!("classifier loss became {}", value),
                });
            }
            tape.backward(loss);
            adam.step(&mut params, &tape.param_grads())?;
        }

        let clf =
            DomainClassifier { vocab_size, hidden: cfg.hidden, domains, params };
        let accuracy = if eval_y.is_empty() {
            clf.accuracy_on(&train_x, &train_y)
        } else {
            clf.accuracy_on(&eval_x, &eval_y)
        };
        Ok((clf, accuracy))
    }

    /// Class scores for one feature vector.
    pub fn scores(&self, feature: &DocFeature) -> Vec<f64> {
        assert_eq!(
            feature.counts.len(),
            self.vocab_size,
            "feature width {} does not match classifier vocabulary {}",
            feature.counts.len(),
            self.vocab_size
        );
        let mut tape = Tape::new(0);
        let w1 = tape.param("cls.w1", Arc::clone(&self.params["cls.w1"]));
        let b1 = tape.param("cls.b1", Arc::clone(&self.params["cls.b1"]));
        let w2 = tape.param("cls.w2", Arc::clone(&self.params["cls.w2"]));
        let b2 = tape.param("cls.b2", Arc::clone(&self.params["cls.b2"]));
        let x = tape.leaf(Tensor::new(&[1, self.vocab_size], feature.counts.clone()));
        let h = tape.matmul(x, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.relu(h);
        let logits = tape.matmul(h, w2);
        let logits = tape.add_bias(logits, b2);
        tape.value(logits).data().to_vec()
    }

    /// Predicted class index; ties break toward the lowest index.
    pub fn predict(&self, feature: &DocFeature) -> usize {
        let scores = self.scores(feature);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }

    fn accuracy_on(&self, x: &Tensor, y: &[usize]) -> f64 {
        let mut correct = 0usize;
        for (i, &gold) in y.iter().enumerate() {
            let f = DocFeature {
                doc_id: String::new(),
                counts: x.data()[i * self.vocab_size..(i + 1) * self.vocab_size].to_vec(),
                degenerate: false,
            };
            if self.predict(&f) == gold {
                correct += 1;
            }
        }
        correct as f64 / y.len() as f64
    }

    /// Per-document predicted domain names, broadcast later to sentences.
    /// Degenerate (empty) documents fall back to the first domain; each such
    /// fallback is reported as a warning.
    pub fn predict_documents(
        &self,
        docs: &[Document],
        vocab: &Vocabulary,
    ) -> (IndexMap<String, String>, Vec<String>) {
        let mut out = IndexMap::new();
        let mut warnings = Vec::new();
        for doc in docs {
            let feature = featurize(doc, vocab);
            let class = if feature.degenerate {
                warnings.push(format!(
                    "document {:?} has no countable tokens; defaulting to domain {:?}",
                    doc.doc_id, self.domains[0]
                ));
                0
            } else {
                self.predict(&feature)
            };
            out.insert(doc.doc_id.clone(), self.domains[class].clone());
        }
        (out, warnings)
    }

    fn fingerprint(&self) -> String {
        classifier_fingerprint(self.vocab_size, self.hidden, &self.domains)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            fingerprint: self.fingerprint(),
            step: 0,
            dev_ppl: None,
            params: self.params.clone(),
        };
        ckpt.save(path, Dtype::F64)
    }

    /// Loads a classifier saved by `save`; the expected geometry and domain
    /// list must be supplied and are verified against the fingerprint.
    pub fn load(path: &Path, vocab_size: usize, domains: Vec<String>) -> Result<DomainClassifier> {
        let ckpt = Checkpoint::load(path)?;
        let hidden = ckpt
            .params
            .get("cls.b1")
            .ok_or_else(|| Error::Checkpoint("not a classifier checkpoint (no cls.b1)".into()))?
            .numel();
        let expected = classifier_fingerprint(vocab_size, hidden, &domains);
        if ckpt.fingerprint != expected {
            return Err(Error::Checkpoint(format!(
                "classifier fingerprint mismatch: stored {}, expected {}",
                ckpt.fingerprint, expected
            )));
        }
        Ok(DomainClassifier { vocab_size, hidden, domains, params: ckpt.params })
    }
}

fn classifier_fingerprint(vocab_size: usize, hidden: usize, domains: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("classifier:{}:{}:{}", vocab_size, hidden, domains.join(",")));
    format!("{:x}", hasher.finalize())
}

/// Replaces oracle tags on examples with classifier-predicted ones, by
/// document. Documents absent from the prediction map keep their tags.
pub fn apply_predicted_tags(
    examples: &mut [TrainingExample],
    predicted: &IndexMap<String, String>,
    vocab: &Vocabulary,
) -> Result<()> {
    for ex in examples.iter_mut() {
        if let Some(domain) = predicted.get(&ex.doc_id) {
            let tag = vocab.domain_tag(domain).ok_or_else(|| {
                Error::Invalid(format!("predicted domain {:?} has no reserved tag", domain))
            })?;
            ex.tag = Some(tag);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_corpus;
    use crate::tensor::grad_check;

    fn doc(id: &str, domain: &str, sentences: &[&str]) -> Document {
        Document {
            doc_id: id.to_string(),
            domain: domain.to_string(),
            sentences: sentences
                .iter()
                .map(|s| {
                    let words: Vec<String> = s.split_whitespace().map(String::from).collect();
                    let tgt = words.iter().map(|w| format!("{}_t", w)).collect();
                    (words, tgt)
                })
                .collect(),
        }
    }

    fn two_domain_docs(per_domain: usize) -> Vec<Document> {
        // Disjoint vocabularies make the task linearly separable.
        let mut docs = Vec::new();
        for i in 0..per_domain {
            let a = ["alpha beta", "beta gamma alpha", "gamma alpha"][i % 3];
            let b = ["delta epsilon", "zeta delta", "epsilon zeta delta"][i % 3];
            docs.push(doc(&format!("a{}", i), "d1", &[a]));
            docs.push(doc(&format!("b{}", i), "d2", &[b]));
        }
        docs
    }

    fn features_and_labels(
        docs: &[Document],
        vocab: &Vocabulary,
        domains: &[String],
    ) -> (Vec<DocFeature>, Vec<usize>) {
        let features: Vec<DocFeature> = docs.iter().map(|d| featurize(d, vocab)).collect();
        let labels = docs
            .iter()
            .map(|d| domains.iter().position(|k| *k == d.domain).expect("seen domain"))
            .collect();
        (features, labels)
    }

    #[test]
    fn features_are_normalized_counts_without_reserved_symbols() {
        let docs = vec![doc("x", "d1", &["a a b"])];
        let vocab = Vocabulary::build(&docs);
        let f = featurize(&docs[0], &vocab);
        assert!(!f.degenerate);
        let a = f.counts[vocab.id("a")];
        let b = f.counts[vocab.id("b")];
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.counts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn features_ignore_order_and_duplication() {
        let d1 = doc("x", "d1", &["a b c"]);
        let d2 = doc("y", "d1", &["c a b"]);
        let d3 = doc("z", "d1", &["a b c", "a b c"]);
        let vocab = Vocabulary::build(&[d1.clone()]);
        let f1 = featurize(&d1, &vocab).counts;
        let f2 = featurize(&d2, &vocab).counts;
        let f3 = featurize(&d3, &vocab).counts;
        assert_eq!(f1, f2, "bag-of-words must ignore order");
        for (a, b) in f1.iter().zip(&f3) {
            assert!((a - b).abs() < 1e-15, "duplication must not change the normalized feature");
        }
    }

    #[test]
    fn empty_document_is_degenerate() {
        let d = Document { doc_id: "e".into(), domain: "d1".into(), sentences: vec![] };
        let other = doc("x", "d1", &["a"]);
        let vocab = Vocabulary::build(&[other]);
        let f = featurize(&d, &vocab);
        assert!(f.degenerate);
        assert!(f.counts.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn separable_domains_reach_perfect_heldout_accuracy() {
        let docs = two_domain_docs(15);
        let vocab = Vocabulary::build(&docs);
        let domains = vec!["d1".to_string(), "d2".to_string()];
        let (features, labels) = features_and_labels(&docs, &vocab, &domains);
        let cfg = ClassifierConfig { hidden: 16, epochs: 150, lr: 0.02, ..Default::default() };
        let (clf, accuracy) = DomainClassifier::train(&features, &labels, domains, &cfg).unwrap();
        assert_eq!(accuracy, 1.0, "disjoint vocabularies must separate perfectly");
        let probe = featurize(&doc("probe", "d2", &["delta zeta"]), &vocab);
        assert_eq!(clf.predict(&probe), 1);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let docs = vec![doc("x", "d1", &["a b"]), doc("y", "d1", &["b a"])];
        let vocab = Vocabulary::build(&docs);
        let domains = vec!["d1".to_string(), "d2".to_string()];
        let (features, labels) = features_and_labels(&docs, &vocab, &domains);
        let r = DomainClassifier::train(&features, &labels, domains, &Default::default());
        assert!(r.is_err(), "one observed class cannot train a classifier");
    }

    #[test]
    fn ties_break_toward_the_lowest_class() {
        let params = init_classifier_params(4, 3, 2, 0);
        let mut zeroed = Parameters::new();
        for (name, t) in &params {
            zeroed.insert(name.clone(), Arc::new(Tensor::zeros(t.shape())));
        }
        let clf = DomainClassifier {
            vocab_size: 4,
            hidden: 3,
            domains: vec!["d1".into(), "d2".into()],
            params: zeroed,
        };
        let f = DocFeature { doc_id: "t".into(), counts: vec![0.25; 4], degenerate: false };
        let scores = clf.scores(&f);
        assert_eq!(scores[0], scores[1], "zero weights tie every class");
        assert_eq!(clf.predict(&f), 0);
    }

    #[test]
    fn documents_broadcast_one_tag_and_empty_docs_warn() {
        let mut docs = two_domain_docs(10);
        docs.push(Document { doc_id: "empty".into(), domain: "d1".into(), sentences: vec![] });
        let vocab = Vocabulary::build(&docs);
        let domains = vec!["d1".to_string(), "d2".to_string()];
        let trainable: Vec<Document> = docs[..20].to_vec();
        let (features, labels) = features_and_labels(&trainable, &vocab, &domains);
        let cfg = ClassifierConfig { hidden: 16, epochs: 150, lr: 0.02, ..Default::default() };
        let (clf, _) = DomainClassifier::train(&features, &labels, domains, &cfg).unwrap();
        let (predicted, warnings) = clf.predict_documents(&docs, &vocab);
        assert_eq!(predicted.len(), docs.len());
        assert_eq!(predicted["empty"], "d1", "empty document defaults to the first domain");
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("empty"));
        for name in predicted.values() {
            assert!(name == "d1" || name == "d2", "prediction stays within seen domains");
        }
    }

    #[test]
    fn predicted_tags_replace_oracle_tags_per_document() {
        let text = "### doc a d1\nalpha beta ||| alpha_t beta_t\ngamma ||| gamma_t\n\
                    ### doc b d2\ndelta ||| delta_t\n";
        let corpus = parse_corpus(text, "test").unwrap();
        let vocab = Vocabulary::build(&corpus.documents);
        let mut examples = crate::data::build_examples(&corpus.documents, &vocab, 100, 2);
        let mut predicted = IndexMap::new();
        predicted.insert("a".to_string(), "d2".to_string());
        apply_predicted_tags(&mut examples, &predicted, &vocab).unwrap();
        for ex in &examples {
            let expected = if ex.doc_id == "a" { "d2" } else { "d2" };
            assert_eq!(ex.tag, vocab.domain_tag(expected), "doc {} tag", ex.doc_id);
        }
    }

    #[test]
    fn classifier_loss_passes_the_gradient_check() {
        let params = init_classifier_params(6, 4, 2, 5);
        let plain: indexmap::IndexMap<String, Tensor> =
            params.iter().map(|(n, t)| (n.clone(), t.as_ref().clone())).collect();
        let features = Tensor::new(
            &[3, 6],
            vec![
                0.5, 0.5, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.2, 0.8, 0.0, 0.0, //
                0.0, 0.1, 0.0, 0.0, 0.3, 0.6,
            ],
        );
        let labels = [0usize, 1, 1];
        let report = grad_check(&plain, 0, 1e-5, |tape, shared| {
            classifier_loss(tape, shared, &features, &labels, 2)
        });
        assert!(report.passes(1e-4), "{}", report.describe());
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        let docs = two_domain_docs(10);
        let vocab = Vocabulary::build(&docs);
        let domains = vec!["d1".to_string(), "d2".to_string()];
        let (features, labels) = features_and_labels(&docs, &vocab, &domains);
        let cfg = ClassifierConfig { hidden: 16, epochs: 80, lr: 0.02, ..Default::default() };
        let (clf, _) = DomainClassifier::train(&features, &labels, domains.clone(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.ckpt");
        clf.save(&path).unwrap();
        let loaded = DomainClassifier::load(&path, vocab.len(), domains.clone()).unwrap();
        for f in &features {
            assert_eq!(clf.predict(f), loaded.predict(f));
        }
        let wrong = DomainClassifier::load(&path, vocab.len() + 1, domains);
        assert!(wrong.is_err(), "geometry mismatch must be refused");
    }
}

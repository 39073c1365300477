//! Evaluation: BLEU, paired-bootstrap significance, TF-IDF domain words,
//! IBM-1 alignment, domain-word F1, and the representative-context ablation.

pub mod ablation;
pub mod bleu;
pub mod bootstrap;
pub mod f1;
pub mod ibm1;
pub mod tfidf;

pub use ablation::{
    ablation_matrix, cosine, mean_context_vector, representative_context, AblationGrid,
};
pub use bleu::{combine_stats, corpus_bleu, sentence_stats, BleuScore, SentenceStats};
pub use bootstrap::{paired_bootstrap, BootstrapResult};
pub use f1::{domain_word_f1, F1Score};
pub use ibm1::{AlignedToken, Ibm1};
pub use tfidf::{tfidf_domain_words, DomainWords};

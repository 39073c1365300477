//! Corpus ingestion, vocabulary, context windows, and batching.

mod batch;
mod corpus;
mod examples;
mod vocab;

pub use batch::{batch_by_tokens, Batch, PaddedMatrix};
pub use corpus::{
    load_corpus, parse_corpus, reference_lines, save_corpus, source_lines, Document, LoadedCorpus,
};
pub use examples::{
    build_context, build_examples, filter_overlong, join_with_sep, TrainingExample,
};
pub use vocab::{
    tag_symbol, TokenId, Vocabulary, BOS_ID, BOS_TOKEN, EOS_ID, EOS_TOKEN, PAD_ID, PAD_TOKEN,
    SEP_ID, SEP_TOKEN, UNK_ID, UNK_TOKEN,
};

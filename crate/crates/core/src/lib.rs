//! Document-level context-aware neural machine translation at desk scale.
//!
//! The crate implements a small but complete NMT stack in plain Rust: an
//! autodiff tape, transformer encoder/decoders, document-context model
//! variants for zero-resource domain adaptation, a training loop with
//! checkpointing, beam-search decoding with ensembling, the evaluation
//! toolbox (BLEU, significance testing, domain-word F1, context ablation),
//! and a synthetic multi-domain corpus generator with controllable
//! domain-dependent polysemy that makes the whole pipeline testable
//! end to end.

pub mod classifier;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

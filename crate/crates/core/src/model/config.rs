//! Architecture configuration shared by all model kinds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which context mechanism (if any) sits on top of the base transformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sentence-level baseline; context ignored.
    Sent,
    /// Domain tag token prepended to the source sentence.
    Tag,
    /// Pooled context embedding added to source embeddings, max pooling.
    DomembMax,
    /// Pooled context embedding through an FFNN, average pooling.
    DomembAvg,
    /// Windowed context pooling + context encoder + gated decoder attention.
    CtxpoolMax,
    CtxpoolAvg,
    /// CtxPool without the pooling step (token-granular context attention).
    Ctxbase,
    /// Context concatenated onto the source sentence.
    Concbase,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Sent,
        ModelKind::Tag,
        ModelKind::DomembMax,
        ModelKind::DomembAvg,
        ModelKind::CtxpoolMax,
        ModelKind::CtxpoolAvg,
        ModelKind::Ctxbase,
        ModelKind::Concbase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Sent => "sent",
            ModelKind::Tag => "tag",
            ModelKind::DomembMax => "domemb_max",
            ModelKind::DomembAvg => "domemb_avg",
            ModelKind::CtxpoolMax => "ctxpool_max",
            ModelKind::CtxpoolAvg => "ctxpool_avg",
            ModelKind::Ctxbase => "ctxbase",
            ModelKind::Concbase => "concbase",
        }
    }

    /// Kinds that pool context embeddings into a single added vector.
    pub fn uses_domain_embedding(&self) -> bool {
        matches!(self, ModelKind::DomembMax | ModelKind::DomembAvg)
    }

    /// Kinds that run a context encoder and attend to it from the decoder.
    pub fn uses_context_encoder(&self) -> bool {
        matches!(self, ModelKind::CtxpoolMax | ModelKind::CtxpoolAvg | ModelKind::Ctxbase)
    }

    /// Kinds whose max/avg choice matters.
    pub fn pool_is_max(&self) -> bool {
        matches!(self, ModelKind::DomembMax | ModelKind::CtxpoolMax)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        ModelKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown model kind {:?}; expected one of {}",
                    s,
                    names.join(", ")
                ))
            })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Encoder and decoder depth L.
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub vocab_size: usize,
    /// Share source/target/output/context embeddings in one table.
    pub tie_embeddings: bool,
    /// Context size k in sentences.
    pub context_size: usize,
    /// Pooling window w for the ctxpool kinds.
    pub pool_window: usize,
    /// Pooling stride s; equal to the window by default (non-overlapping).
    pub pool_stride: usize,
    /// Sentence pairs longer than this are removed from training.
    pub max_sentence_tokens: usize,
    /// Each context sentence is truncated to this many tokens.
    pub ctx_sentence_limit: usize,
    /// Also add the domain embedding to decoder input embeddings. The
    /// reference architecture injects it on the encoder side only, so this
    /// is off by default.
    pub domemb_decoder_side: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: trains in minutes on a CPU.
    pub fn desk(kind: ModelKind, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            kind,
            num_layers: 2,
            num_heads: 2,
            d_model: 64,
            d_ff: 256,
            // At desk scale nothing overfits; dropout noise only slows the
            // low-frequency context pathway, so the desk preset trains clean.
            dropout: 0.0,
            label_smoothing: 0.1,
            vocab_size,
            tie_embeddings: true,
            context_size: 10,
            pool_window: 10,
            pool_stride: 10,
            max_sentence_tokens: 100,
            ctx_sentence_limit: 100,
            domemb_decoder_side: false,
        }
    }

    /// The full-scale configuration used for parameter-count cross-checks.
    pub fn paper(kind: ModelKind, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            num_layers: 6,
            num_heads: 8,
            d_model: 512,
            d_ff: 2048,
            dropout: 0.1,
            ..ModelConfig::desk(kind, vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 {
            return Err(Error::Config("d_model and num_heads must be positive".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.pool_window < 1 || self.pool_stride < 1 {
            return Err(Error::Config(format!(
                "pool window {} and stride {} must be at least 1",
                self.pool_window, self.pool_stride
            )));
        }
        if self.vocab_size <= 5 {
            return Err(Error::Config(format!(
                "vocab size {} leaves no room beyond reserved symbols",
                self.vocab_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        Ok(())
    }

    /// Hard cap on a concatenation-model encoder input: the worst case the
    /// configured limits allow (k truncated context sentences, separators,
    /// and the source sentence itself).
    pub fn conc_input_limit(&self) -> usize {
        self.context_size * (self.ctx_sentence_limit + 1) + self.max_sentence_tokens
    }

    /// Stable hex digest of the architecture, used to match checkpoints to
    /// configs. Serialization is serde_json with struct field order, which
    /// is deterministic for a fixed struct definition.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

//! Parameter enumeration, initialization, and counting.
//!
//! Everything that knows which parameters a configuration owns lives here:
//! `parameter_shapes` is the single source of truth consumed by
//! initialization, checkpointing, warm starts, and `count_parameters`.
//! Context-specific parameters carry the `ctx/` name prefix so warm starts
//! can tell them apart from parameters shared with the sentence baseline.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind};
use crate::tensor::{SharedTensor, Tensor};
use std::sync::Arc;

pub type Parameters = IndexMap<String, SharedTensor>;

/// Name prefix marking parameters absent from the sentence-level baseline.
pub const CTX_PREFIX: &str = "ctx/";

/// Initial gate bias. Positive so a warm-started gated model starts strongly
/// biased toward its main (baseline) branch.
pub const GATE_BIAS_INIT: f64 = 2.0;

fn attention_shapes(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        out.push((format!("{}.{}", prefix, proj), vec![d, d]));
    }
    for bias in ["bq", "bk", "bv", "bo"] {
        out.push((format!("{}.{}", prefix, bias), vec![d]));
    }
}

fn layer_norm_shapes(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, d: usize) {
    out.push((format!("{}.gain", prefix), vec![d]));
    out.push((format!("{}.bias", prefix), vec![d]));
}

fn ffn_shapes(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, d: usize, d_ff: usize) {
    out.push((format!("{}.w1", prefix), vec![d, d_ff]));
    out.push((format!("{}.b1", prefix), vec![d_ff]));
    out.push((format!("{}.w2", prefix), vec![d_ff, d]));
    out.push((format!("{}.b2", prefix), vec![d]));
}

fn encoder_layer_shapes(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, cfg: &ModelConfig) {
    attention_shapes(out, &format!("{}.attn", prefix), cfg.d_model);
    layer_norm_shapes(out, &format!("{}.ln1", prefix), cfg.d_model);
    ffn_shapes(out, &format!("{}.ffn", prefix), cfg.d_model, cfg.d_ff);
    layer_norm_shapes(out, &format!("{}.ln2", prefix), cfg.d_model);
}

fn decoder_layer_shapes(out: &mut Vec<(String, Vec<usize>)>, i: usize, cfg: &ModelConfig) {
    attention_shapes(out, &format!("dec.{}.self_attn", i), cfg.d_model);
    layer_norm_shapes(out, &format!("dec.{}.ln1", i), cfg.d_model);
    attention_shapes(out, &format!("dec.{}.cross_attn", i), cfg.d_model);
    if cfg.kind.uses_context_encoder() {
        attention_shapes(out, &format!("{}dec.{}.ctx_attn", CTX_PREFIX, i), cfg.d_model);
        out.push((
            format!("{}dec.{}.gate.w", CTX_PREFIX, i),
            vec![2 * cfg.d_model, cfg.d_model],
        ));
        out.push((format!("{}dec.{}.gate.b", CTX_PREFIX, i), vec![cfg.d_model]));
    }
    layer_norm_shapes(out, &format!("dec.{}.ln2", i), cfg.d_model);
    ffn_shapes(out, &format!("dec.{}.ffn", i), cfg.d_model, cfg.d_ff);
    layer_norm_shapes(out, &format!("dec.{}.ln3", i), cfg.d_model);
}

/// Ordered (name, shape) list of every learned parameter of a configuration.
pub fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    if cfg.tie_embeddings {
        out.push(("embed".to_string(), vec![cfg.vocab_size, cfg.d_model]));
    } else {
        out.push(("src_embed".to_string(), vec![cfg.vocab_size, cfg.d_model]));
        out.push(("tgt_embed".to_string(), vec![cfg.vocab_size, cfg.d_model]));
        out.push(("out_embed".to_string(), vec![cfg.vocab_size, cfg.d_model]));
    }
    for i in 0..cfg.num_layers {
        encoder_layer_shapes(&mut out, &format!("enc.{}", i), cfg);
    }
    for i in 0..cfg.num_layers {
        decoder_layer_shapes(&mut out, i, cfg);
    }
    match cfg.kind {
        ModelKind::DomembAvg => {
            // The pooled-average path runs through a two-layer FFNN.
            ffn_shapes(
                &mut out,
                &format!("{}pool_ffn", CTX_PREFIX),
                cfg.d_model,
                cfg.d_ff,
            );
        }
        k if k.uses_context_encoder() && cfg.num_layers >= 1 => {
            // Context-specific final encoder layer; the first L-1 encoder
            // layers are shared with the main path by name.
            encoder_layer_shapes(&mut out, &format!("{}enc.final", CTX_PREFIX), cfg);
        }
        _ => {}
    }
    out
}

/// Total number of learned scalars.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    parameter_shapes(cfg).iter().map(|(_, shape)| shape.iter().product::<usize>()).sum()
}

/// Deterministic initialization: Xavier-uniform matrices, zero biases, unit
/// layer-norm gains, gate biases at +2.
pub fn init_parameters(cfg: &ModelConfig, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    for (name, shape) in parameter_shapes(cfg) {
        let tensor = init_one(&name, &shape, &mut rng);
        params.insert(name, Arc::new(tensor));
    }
    params
}

/// Initializes a single parameter by its naming convention. The RNG is only
/// consumed by matrix parameters, in enumeration order.
pub fn init_one(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    if shape.len() == 2 {
        return Tensor::xavier_uniform(shape[0], shape[1], rng);
    }
    if name.ends_with(".gain") {
        return Tensor::filled(shape, 1.0);
    }
    if name.ends_with("gate.b") {
        return Tensor::filled(shape, GATE_BIAS_INIT);
    }
    Tensor::zeros(shape)
}

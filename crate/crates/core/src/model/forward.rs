//! Forward passes for the sentence baseline and every context variant.
//!
//! All passes operate on one example at a time as [T, d_model] matrices on a
//! `Tape`; a batch is a sum of example losses on a shared tape, so gradients
//! from tied and shared parameters accumulate through name-deduplicated
//! parameter nodes. Encoder states are ordinary nodes, which lets decoding
//! re-inject precomputed states as constant leaves.

use std::sync::Arc;

use super::config::{ModelConfig, ModelKind};
use super::params::{init_parameters, parameter_shapes, Parameters};
use crate::data::{TrainingExample, BOS_ID, EOS_ID, PAD_ID, SEP_ID};
use crate::tensor::{NodeId, PoolMode, Tape, Tensor};
use crate::{Error, Result};

/// Layer-norm stabilizer; small enough to be invisible at f64 scale.
pub const LN_EPS: f64 = 1e-5;

/// Sinusoidal positional encodings for `len` positions: even columns carry
/// sin(pos / 10000^(2i/d)), odd columns the matching cos.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d.div_ceil(2) {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = angle.sin();
            if 2 * i + 1 < d {
                data[pos * d + 2 * i + 1] = angle.cos();
            }
        }
    }
    Tensor::new(&[len, d], data)
}

/// Frames a bare token sequence for the encoder: <BOS> tokens <EOS>.
pub fn frame_source(ids: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(ids.len() + 2);
    out.push(BOS_ID);
    out.extend_from_slice(ids);
    out.push(EOS_ID);
    out
}

/// Model-ready id sequences for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    /// Framed encoder input, <BOS> ... <EOS>, after any kind-specific
    /// rewriting (tag prepending, context concatenation).
    pub src: Vec<usize>,
    /// Teacher-forcing decoder input: <BOS> followed by the target tokens.
    pub tgt_in: Vec<usize>,
    /// Gold next tokens: the target tokens followed by <EOS>.
    pub gold: Vec<usize>,
    /// <SEP>-joined context bundle for the domain-embedding and
    /// context-encoder paths; empty for kinds that do not read it.
    pub ctx: Vec<usize>,
}

/// Rewrites one training example into model-ready id sequences for the
/// configured kind. Only the source side changes across kinds; the target is
/// always the current sentence alone.
pub fn prepare_input(cfg: &ModelConfig, ex: &TrainingExample) -> Result<ModelInput> {
    let mut ctx = Vec::new();
    let bare_src = match cfg.kind {
        ModelKind::Sent => ex.src.clone(),
        ModelKind::Tag => {
            let tag = ex.tag.ok_or_else(|| {
                Error::Invalid(format!(
                    "tag model requires a domain tag on example {}#{}",
                    ex.doc_id, ex.position
                ))
            })?;
            let mut ids = Vec::with_capacity(ex.src.len() + 1);
            ids.push(tag);
            ids.extend_from_slice(&ex.src);
            ids
        }
        ModelKind::DomembMax
        | ModelKind::DomembAvg
        | ModelKind::CtxpoolMax
        | ModelKind::CtxpoolAvg
        | ModelKind::Ctxbase => {
            ctx = ex.context_ids();
            ex.src.clone()
        }
        ModelKind::Concbase => concat_context_source(cfg, ex),
    };
    Ok(ModelInput {
        src: frame_source(&bare_src),
        tgt_in: {
            let mut t = Vec::with_capacity(ex.tgt.len() + 1);
            t.push(BOS_ID);
            t.extend_from_slice(&ex.tgt);
            t
        },
        gold: {
            let mut g = ex.tgt.clone();
            g.push(EOS_ID);
            g
        },
        ctx,
    })
}

/// Concatenation-model source: context sentences joined by <SEP>, then <SEP>,
/// then the current sentence. Oldest context sentences are dropped first when
/// the combined length exceeds the configured encoder limit.
fn concat_context_source(cfg: &ModelConfig, ex: &TrainingExample) -> Vec<usize> {
    let limit = cfg.conc_input_limit();
    let mut sentences: Vec<&[usize]> = ex.ctx_sentences.iter().map(Vec::as_slice).collect();
    let total = |s: &[&[usize]]| -> usize {
        // n sentences contribute n separators: n-1 joins plus the one
        // separating context from source.
        s.iter().map(|c| c.len()).sum::<usize>() + s.len() + ex.src.len()
    };
    while !sentences.is_empty() && total(&sentences) > limit {
        sentences.remove(0);
    }
    let mut out = Vec::new();
    for sent in &sentences {
        out.extend_from_slice(sent);
        out.push(SEP_ID);
    }
    out.extend_from_slice(&ex.src);
    out
}

/// A configuration plus its parameter bindings. Parameters are shared
/// (`Arc`) so tapes, checkpoints, and optimizers can alias them cheaply.
pub struct Model {
    pub cfg: ModelConfig,
    pub params: Parameters,
}

impl Model {
    /// Freshly initialized model.
    pub fn new(cfg: ModelConfig, seed: u64) -> Model {
        let params = init_parameters(&cfg, seed);
        Model { cfg, params }
    }

    /// Wraps existing parameters, verifying they are exactly the set the
    /// configuration expects.
    pub fn from_parts(cfg: ModelConfig, params: Parameters) -> Result<Model> {
        let expected = parameter_shapes(&cfg);
        if params.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch for {}: expected {} tensors, got {}",
                cfg.kind,
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                None => {
                    return Err(Error::Checkpoint(format!("missing parameter {:?}", name)));
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {:?} has shape {:?}, expected {:?}",
                        name,
                        t.shape(),
                        shape
                    )));
                }
                _ => {}
            }
        }
        Ok(Model { cfg, params })
    }

    /// Binds a named parameter onto the tape (deduplicated per tape).
    fn p(&self, tape: &mut Tape, name: &str) -> NodeId {
        let t = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("model has no parameter named {:?}", name));
        tape.param(name, Arc::clone(t))
    }

    fn src_table(&self) -> &'static str {
        if self.cfg.tie_embeddings {
            "embed"
        } else {
            "src_embed"
        }
    }

    fn tgt_table(&self) -> &'static str {
        if self.cfg.tie_embeddings {
            "embed"
        } else {
            "tgt_embed"
        }
    }

    fn out_table(&self) -> &'static str {
        if self.cfg.tie_embeddings {
            "embed"
        } else {
            "out_embed"
        }
    }

    // ── Attention and layers ────────────────────────────────────────────────

    /// Multi-head scaled dot-product attention. `prefix` names the projection
    /// parameters ({prefix}.wq ... {prefix}.bo), `key_mask` marks attendable
    /// key positions, and `causal` additionally blocks keys beyond each
    /// query's own position. A query whose keys are all blocked attends to
    /// nothing and yields a zero row instead of NaN.
    pub fn multi_head_attention(
        &self,
        tape: &mut Tape,
        prefix: &str,
        q_in: NodeId,
        kv_in: NodeId,
        key_mask: &[bool],
        causal: bool,
    ) -> NodeId {
        let d = self.cfg.d_model;
        let heads = self.cfg.num_heads;
        let dh = d / heads;
        let tq = tape.value(q_in).rows();
        let tk = tape.value(kv_in).rows();
        assert_eq!(
            key_mask.len(),
            tk,
            "attention key mask covers {} positions but keys have {} rows",
            key_mask.len(),
            tk
        );
        if causal {
            assert_eq!(tq, tk, "causal attention requires square query/key dims");
        }

        let (wq, bq) = (self.p(tape, &format!("{}.wq", prefix)), self.p(tape, &format!("{}.bq", prefix)));
        let (wk, bk) = (self.p(tape, &format!("{}.wk", prefix)), self.p(tape, &format!("{}.bk", prefix)));
        let (wv, bv) = (self.p(tape, &format!("{}.wv", prefix)), self.p(tape, &format!("{}.bv", prefix)));
        let (wo, bo) = (self.p(tape, &format!("{}.wo", prefix)), self.p(tape, &format!("{}.bo", prefix)));

        let q = tape.matmul(q_in, wq);
        let q = tape.add_bias(q, bq);
        let k = tape.matmul(kv_in, wk);
        let k = tape.add_bias(k, bk);
        let v = tape.matmul(kv_in, wv);
        let v = tape.add_bias(v, bv);

        let mut keep = vec![false; tq * tk];
        for i in 0..tq {
            for j in 0..tk {
                keep[i * tk + j] = key_mask[j] && (!causal || j <= i);
            }
        }

        let mut merged: Option<NodeId> = None;
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, lo, hi);
            let kh = tape.slice_cols(k, lo, hi);
            let vh = tape.slice_cols(v, lo, hi);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = tape.masked_softmax_rows(scaled, &keep);
            let ctx = tape.matmul(attn, vh);
            merged = Some(match merged {
                None => ctx,
                Some(m) => tape.concat_cols(m, ctx),
            });
        }
        let concat = merged.expect("attention requires at least one head");
        let out = tape.matmul(concat, wo);
        tape.add_bias(out, bo)
    }

    /// Post-LN residual connection: layer_norm(x + dropout(sub_out)).
    fn sublayer(&self, tape: &mut Tape, x: NodeId, sub_out: NodeId, ln_prefix: &str) -> NodeId {
        let dropped = tape.dropout(sub_out, self.cfg.dropout);
        let sum = tape.add(x, dropped);
        let gain = self.p(tape, &format!("{}.gain", ln_prefix));
        let bias = self.p(tape, &format!("{}.bias", ln_prefix));
        tape.layer_norm(sum, gain, bias, LN_EPS)
    }

    fn feed_forward(&self, tape: &mut Tape, prefix: &str, x: NodeId) -> NodeId {
        let w1 = self.p(tape, &format!("{}.w1", prefix));
        let b1 = self.p(tape, &format!("{}.b1", prefix));
        let w2 = self.p(tape, &format!("{}.w2", prefix));
        let b2 = self.p(tape, &format!("{}.b2", prefix));
        let h = tape.matmul(x, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.relu(h);
        let out = tape.matmul(h, w2);
        tape.add_bias(out, b2)
    }

    fn encoder_layer(&self, tape: &mut Tape, prefix: &str, x: NodeId, mask: &[bool]) -> NodeId {
        let attn = self.multi_head_attention(tape, &format!("{}.attn", prefix), x, x, mask, false);
        let h = self.sublayer(tape, x, attn, &format!("{}.ln1", prefix));
        let ffn = self.feed_forward(tape, &format!("{}.ffn", prefix), h);
        self.sublayer(tape, h, ffn, &format!("{}.ln2", prefix))
    }

    /// Scaled token embeddings plus positional encodings.
    fn embed_positioned(&self, tape: &mut Tape, table: &str, ids: &[usize]) -> NodeId {
        let tbl = self.p(tape, table);
        let e = tape.embedding(tbl, ids);
        let scaled = tape.scale(e, (self.cfg.d_model as f64).sqrt());
        let pe = tape.leaf(positional_encoding(ids.len(), self.cfg.d_model));
        tape.add(scaled, pe)
    }

    // ── Domain embedding (DomEmb) ───────────────────────────────────────────

    /// Pools raw (unscaled) context token embeddings into one [1, d_model]
    /// domain vector; the averaged variant additionally passes through a
    /// two-layer ReLU FFNN. Empty context yields None: the zero domain
    /// embedding, with the FFNN bypassed.
    pub fn domain_embedding(&self, tape: &mut Tape, ctx_ids: &[usize]) -> Option<NodeId> {
        if ctx_ids.is_empty() {
            return None;
        }
        let tbl = self.p(tape, self.src_table());
        let e = tape.embedding(tbl, ctx_ids);
        let mode = if self.cfg.kind.pool_is_max() { PoolMode::Max } else { PoolMode::Avg };
        let valid = vec![true; ctx_ids.len()];
        // One window spanning every token: pooled across all of time.
        let (pooled, _) = tape.pool_over_time(e, mode, ctx_ids.len(), ctx_ids.len(), &valid);
        if self.cfg.kind == ModelKind::DomembAvg {
            Some(self.feed_forward(tape, "ctx/pool_ffn", pooled))
        } else {
            Some(pooled)
        }
    }

    // ── Encoders ────────────────────────────────────────────────────────────

    /// Main encoder over a framed source. `domain` (a [1, d_model] node) is
    /// broadcast-added to every position of the input representation.
    pub fn encode_source(
        &self,
        tape: &mut Tape,
        src_ids: &[usize],
        domain: Option<NodeId>,
    ) -> NodeId {
        let mut x = self.embed_positioned(tape, self.src_table(), src_ids);
        if let Some(dom) = domain {
            // The addition happens in embedding space, so the domain vector
            // carries the same sqrt(d_model) scale as the token embeddings.
            let dom = tape.scale(dom, (self.cfg.d_model as f64).sqrt());
            x = tape.add_bias(x, dom);
        }
        let mut x = tape.dropout(x, self.cfg.dropout);
        let mask = vec![true; src_ids.len()];
        for i in 0..self.cfg.num_layers {
            x = self.encoder_layer(tape, &format!("enc.{}", i), x, &mask);
        }
        x
    }

    /// Context encoder for CtxPool/CtxBase: embedded context, pooled over
    /// time for the pooling kinds, positioned over the resulting slots, then
    /// run through the shared first L-1 encoder layers plus the
    /// context-specific final layer. Returns the states and a slot validity
    /// mask; empty context yields one fully-masked zero slot.
    pub fn encode_context(&self, tape: &mut Tape, ctx_ids: &[usize]) -> (NodeId, Vec<bool>) {
        let d = self.cfg.d_model;
        if ctx_ids.is_empty() {
            return (tape.leaf(Tensor::zeros(&[1, d])), vec![false]);
        }
        let tbl = self.p(tape, self.src_table());
        let e = tape.embedding(tbl, ctx_ids);
        let scaled = tape.scale(e, (d as f64).sqrt());
        let (pooled, slot_mask) = if self.cfg.kind == ModelKind::Ctxbase {
            (scaled, vec![true; ctx_ids.len()])
        } else {
            let mode = if self.cfg.kind.pool_is_max() { PoolMode::Max } else { PoolMode::Avg };
            let valid = vec![true; ctx_ids.len()];
            tape.pool_over_time(scaled, mode, self.cfg.pool_window, self.cfg.pool_stride, &valid)
        };
        let pe = tape.leaf(positional_encoding(slot_mask.len(), d));
        let x = tape.add(pooled, pe);
        let mut x = tape.dropout(x, self.cfg.dropout);
        if self.cfg.num_layers >= 1 {
            for i in 0..self.cfg.num_layers - 1 {
                x = self.encoder_layer(tape, &format!("enc.{}", i), x, &slot_mask);
            }
            x = self.encoder_layer(tape, "ctx/enc.final", x, &slot_mask);
        }
        (x, slot_mask)
    }

    // ── Decoder ─────────────────────────────────────────────────────────────

    /// Gated merge of the encoder-decoder attention output with a context
    /// attention conditioned on it: c_ctx attends over the context states
    /// with c_main as queries, then g = sigmoid([c_main; c_ctx] W_g + b_g)
    /// blends g*c_main + (1-g)*c_ctx. A fully-masked context bypasses the
    /// merge entirely, returning c_main untouched, so context-free inputs
    /// reproduce baseline behavior exactly.
    pub fn context_attention_merge(
        &self,
        tape: &mut Tape,
        layer: usize,
        c_main: NodeId,
        ctx_states: NodeId,
        ctx_mask: &[bool],
    ) -> NodeId {
        if !ctx_mask.iter().any(|&m| m) {
            return c_main;
        }
        let c_ctx = self.multi_head_attention(
            tape,
            &format!("ctx/dec.{}.ctx_attn", layer),
            c_main,
            ctx_states,
            ctx_mask,
            false,
        );
        let cat = tape.concat_cols(c_main, c_ctx);
        let gw = self.p(tape, &format!("ctx/dec.{}.gate.w", layer));
        let gb = self.p(tape, &format!("ctx/dec.{}.gate.b", layer));
        let pre = tape.matmul(cat, gw);
        let pre = tape.add_bias(pre, gb);
        let g = tape.sigmoid(pre);
        let inv = tape.affine(g, -1.0, 1.0);
        let main_part = tape.mul(g, c_main);
        let ctx_part = tape.mul(inv, c_ctx);
        tape.add(main_part, ctx_part)
    }

    /// Teacher-forced decoder pass producing next-token logits [T, V] for a
    /// <BOS>-led prefix. `ctx` supplies context states for the gated merge;
    /// `domain` is broadcast-added to the decoder input representation (the
    /// optional decoder-side domain embedding).
    pub fn decode(
        &self,
        tape: &mut Tape,
        tgt_in: &[usize],
        enc: NodeId,
        ctx: Option<(NodeId, &[bool])>,
        domain: Option<NodeId>,
    ) -> NodeId {
        assert!(!tgt_in.is_empty(), "decoder prefix must contain at least <BOS>");
        debug_assert_eq!(tgt_in[0], BOS_ID, "decoder prefix must begin with <BOS>");
        let t = tgt_in.len();
        let mut x = self.embed_positioned(tape, self.tgt_table(), tgt_in);
        if let Some(dom) = domain {
            // Embedding-space addition, same scale convention as the encoder.
            let dom = tape.scale(dom, (self.cfg.d_model as f64).sqrt());
            x = tape.add_bias(x, dom);
        }
        let mut x = tape.dropout(x, self.cfg.dropout);
        let tgt_mask = vec![true; t];
        let enc_mask = vec![true; tape.value(enc).rows()];
        for i in 0..self.cfg.num_layers {
            let sa =
                self.multi_head_attention(tape, &format!("dec.{}.self_attn", i), x, x, &tgt_mask, true);
            let h1 = self.sublayer(tape, x, sa, &format!("dec.{}.ln1", i));
            let c_main = self.multi_head_attention(
                tape,
                &format!("dec.{}.cross_attn", i),
                h1,
                enc,
                &enc_mask,
                false,
            );
            let merged = match ctx {
                Some((cs, cm)) if self.cfg.kind.uses_context_encoder() => {
                    self.context_attention_merge(tape, i, c_main, cs, cm)
                }
                _ => c_main,
            };
            let h2 = self.sublayer(tape, h1, merged, &format!("dec.{}.ln2", i));
            let ffn = self.feed_forward(tape, &format!("dec.{}.ffn", i), h2);
            x = self.sublayer(tape, h2, ffn, &format!("dec.{}.ln3", i));
        }
        let out = self.p(tape, self.out_table());
        tape.matmul_nt(x, out)
    }

    // ── End-to-end passes ───────────────────────────────────────────────────

    /// Full teacher-forced pass from prepared inputs to logits [T, V].
    pub fn forward_logits(&self, tape: &mut Tape, input: &ModelInput) -> NodeId {
        let domain = if self.cfg.kind.uses_domain_embedding() {
            self.domain_embedding(tape, &input.ctx)
        } else {
            None
        };
        let enc = self.encode_source(tape, &input.src, domain);
        let ctx = if self.cfg.kind.uses_context_encoder() {
            Some(self.encode_context(tape, &input.ctx))
        } else {
            None
        };
        let dec_domain = if self.cfg.domemb_decoder_side { domain } else { None };
        self.decode(tape, &input.tgt_in, enc, ctx.as_ref().map(|(n, m)| (*n, m.as_slice())), dec_domain)
    }

    /// Summed label-smoothed loss for one example, with its gold token count.
    pub fn example_loss_sum(
        &self,
        tape: &mut Tape,
        ex: &TrainingExample,
    ) -> Result<(NodeId, usize)> {
        let input = prepare_input(&self.cfg, ex)?;
        let logits = self.forward_logits(tape, &input);
        let log_probs = tape.log_softmax_rows(logits);
        let loss = tape.nll_smoothed(log_probs, &input.gold, self.cfg.label_smoothing, PAD_ID);
        Ok((loss, input.gold.len()))
    }

    /// Mean label-smoothed loss over a batch of examples (per gold token),
    /// with the total gold token count.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        examples: &[TrainingExample],
    ) -> Result<(NodeId, usize)> {
        if examples.is_empty() {
            return Err(Error::Invalid("loss over an empty batch".into()));
        }
        let mut total_tokens = 0usize;
        let mut acc: Option<NodeId> = None;
        for ex in examples {
            let (sum, n) = self.example_loss_sum(tape, ex)?;
            total_tokens += n;
            acc = Some(match acc {
                None => sum,
                Some(a) => tape.add(a, sum),
            });
        }
        let total = acc.expect("non-empty batch produced no loss");
        Ok((tape.scale(total, 1.0 / total_tokens as f64), total_tokens))
    }
}

/// Label-smoothed cross-entropy over possibly padded logits: positions whose
/// gold id is <PAD> are masked out, and the loss averages over the rest.
/// Errors when every position is padding.
pub fn label_smoothed_loss(
    tape: &mut Tape,
    logits: NodeId,
    gold: &[usize],
    eps: f64,
) -> Result<NodeId> {
    let live = gold.iter().filter(|&&g| g != PAD_ID).count();
    if live == 0 {
        return Err(Error::Invalid(
            "label_smoothed_loss: every gold position is padding".into(),
        ));
    }
    let log_probs = tape.log_softmax_rows(logits);
    let sum = tape.nll_smoothed(log_probs, gold, eps, PAD_ID);
    Ok(tape.scale(sum, 1.0 / live as f64))
}

//! Reverse-mode autodiff on a Wengert tape.
//!
//! A `Tape` records every operation of one forward pass as a node; `backward`
//! walks the list in reverse and accumulates gradients. Tapes are cheap,
//! single-use and independent of each other, so separate examples can be
//! evaluated on separate tapes (including from different threads) without any
//! shared mutable state.
//!
//! Parameters are bound by name: binding the same name twice on one tape
//! returns the same node, which is what makes weight tying and cross-branch
//! layer sharing work without any special casing in the backward pass.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{matmul_acc, matmul_nt_acc, matmul_tn_acc, SharedTensor, Tensor};

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Pooling flavor for [`Tape::pool_over_time`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

enum Value {
    Owned(Tensor),
    Shared(SharedTensor),
}

impl Value {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// out = x * mul + add (elementwise, constants); only `mul` survives
    /// into the backward pass.
    AffineConst { x: NodeId, mul: f64 },
    /// out[i, j] = x[i, j] + bias[j].
    AddBias { x: NodeId, bias: NodeId },
    /// out[i, j] = x[i, j] * col[i, 0].
    MulColVec { x: NodeId, col: NodeId },
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Row-wise softmax; rows fully suppressed by a keep-mask produce all
    /// zeros, which the output-only backward formula handles unchanged.
    SoftmaxRows { x: NodeId },
    LogSoftmaxRows(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    Dropout { x: NodeId, mask: Arc<Vec<f64>> },
    Embedding { table: NodeId, ids: Arc<Vec<usize>> },
    ConcatCols(NodeId, NodeId),
    SliceCols { x: NodeId, start: usize, end: usize },
    PoolOverTime {
        x: NodeId,
        mode: PoolMode,
        window: usize,
        stride: usize,
        /// Per output element (slot-major), the input row the max came from.
        /// Empty for average pooling.
        argmax: Arc<Vec<usize>>,
        /// Per input row, whether it participates in pooling.
        valid: Arc<Vec<bool>>,
        /// Per slot, how many valid rows it covered.
        counts: Arc<Vec<usize>>,
    },
    SumAll(NodeId),
    /// Label-smoothed negative log-likelihood summed over positions, taking
    /// log-probabilities as input. The smoothing mass ε is spread uniformly
    /// over the vocabulary minus the gold token and the excluded (pad) token.
    NllSmoothed { log_probs: NodeId, gold: Arc<Vec<usize>>, eps: f64, excluded: usize },
}

struct Node {
    value: Value,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A single-use computation record.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
    rng: ChaCha8Rng,
    train_mode: bool,
}

impl Tape {
    /// `seed` drives only stochastic ops (dropout); two tapes with the same
    /// seed and the same op sequence produce identical results.
    pub fn new(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            train_mode: false,
        }
    }

    /// Enables train-time behavior (dropout active). Off by default.
    pub fn set_train(&mut self, train: bool) {
        self.train_mode = train;
    }

    pub fn is_train(&self) -> bool {
        self.train_mode
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.get()
    }

    /// Gradient of the last `backward` call with respect to this node, if the
    /// node participated.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value: Value::Owned(value), grad: None, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    // ── Node constructors ──────────────────────────────────────────────────

    /// Constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a named parameter. The same name on the same tape always returns
    /// the same node, so tied weights accumulate one shared gradient.
    pub fn param(&mut self, name: &str, value: SharedTensor) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        self.nodes.push(Node {
            value: Value::Shared(value),
            grad: None,
            op: Op::Param,
            requires_grad: true,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "add: shapes {:?} and {:?} differ",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape(), data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Add(a, b), req)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "sub: shapes {:?} and {:?} differ",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(ta.shape(), data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Sub(a, b), req)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "mul: shapes {:?} and {:?} differ",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape(), data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Mul(a, b), req)
    }

    pub fn scale(&mut self, x: NodeId, mul: f64) -> NodeId {
        self.affine(x, mul, 0.0)
    }

    /// out = x * mul + add, elementwise with scalar constants.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * mul + add).collect();
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::AffineConst { x, mul }, req)
    }

    /// Adds a length-n bias vector to every row of an m×n input.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(
            tb.numel(),
            n,
            "add_bias: input shape {:?} needs a bias of length {}, got shape {:?}",
            tx.shape(),
            n,
            tb.shape()
        );
        let mut data = tx.data().to_vec();
        for i in 0..m {
            for (v, b) in data[i * n..(i + 1) * n].iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x) || self.requires(bias);
        self.push(out, Op::AddBias { x, bias }, req)
    }

    /// Multiplies row i of an m×n input by col[i], where col is m×1.
    pub fn mul_col_vec(&mut self, x: NodeId, col: NodeId) -> NodeId {
        let (tx, tc) = (self.value(x), self.value(col));
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(
            tc.numel(),
            m,
            "mul_col_vec: input shape {:?} needs a column of length {}, got shape {:?}",
            tx.shape(),
            m,
            tc.shape()
        );
        let mut data = tx.data().to_vec();
        for i in 0..m {
            let c = tc.data()[i];
            for v in data[i * n..(i + 1) * n].iter_mut() {
                *v *= c;
            }
        }
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x) || self.requires(col);
        self.push(out, Op::MulColVec { x, col }, req)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        assert_eq!(
            k, k2,
            "matmul: inner dimensions differ (lhs {:?}, rhs {:?})",
            ta.shape(),
            tb.shape()
        );
        let mut data = vec![0.0; m * n];
        matmul_acc(&mut data, ta.data(), tb.data(), m, k, n);
        let out = Tensor::new(&[m, n], data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::MatMul(a, b), req)
    }

    /// a · bᵀ with a m×k, b n×k.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        assert_eq!(
            k, k2,
            "matmul_nt: inner dimensions differ (lhs {:?}, rhs-transposed {:?})",
            ta.shape(),
            tb.shape()
        );
        let mut data = vec![0.0; m * n];
        matmul_nt_acc(&mut data, ta.data(), tb.data(), m, k, n);
        let out = Tensor::new(&[m, n], data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::MatMulNT(a, b), req)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::Relu(x), req)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::Sigmoid(x), req)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax over the columns where `mask` is true. Masked columns
    /// get probability zero; a row whose mask is entirely false produces all
    /// zeros instead of NaN, so downstream attention reads a zero vector.
    pub fn masked_softmax_rows(&mut self, x: NodeId, mask: &[bool]) -> NodeId {
        let tx = self.value(x);
        assert_eq!(
            mask.len(),
            tx.numel(),
            "masked_softmax_rows: mask length {} does not match input shape {:?}",
            mask.len(),
            tx.shape()
        );
        self.softmax_impl(x, Some(Arc::new(mask.to_vec())))
    }

    fn softmax_impl(&mut self, x: NodeId, mask: Option<Arc<Vec<bool>>>) -> NodeId {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &tx.data()[i * n..(i + 1) * n];
            let kept = |j: usize| mask.as_ref().map_or(true, |mk| mk[i * n + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if kept(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if kept(j) {
                    let e = (v - max).exp();
                    data[i * n + j] = e;
                    sum += e;
                }
            }
            for v in data[i * n..(i + 1) * n].iter_mut() {
                *v /= sum;
            }
        }
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::SoftmaxRows { x }, req)
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &tx.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for (j, &v) in row.iter().enumerate() {
                data[i * n + j] = v - log_sum;
            }
        }
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::LogSoftmaxRows(x), req)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(
            tg.numel(),
            n,
            "layer_norm: input shape {:?} needs gain of length {}, got shape {:?}",
            tx.shape(),
            n,
            tg.shape()
        );
        assert_eq!(
            tb.numel(),
            n,
            "layer_norm: input shape {:?} needs bias of length {}, got shape {:?}",
            tx.shape(),
            n,
            tb.shape()
        );
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &tx.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                data[i * n + j] = (row[j] - mean) * inv_std * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x) || self.requires(gain) || self.requires(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, eps }, req)
    }

    /// Inverted dropout. Active only in train mode; in eval mode this is the
    /// identity and records nothing. The mask is drawn from the tape's seeded
    /// RNG, so a fixed tape seed makes the whole pass reproducible.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        assert!((0.0..1.0).contains(&p), "dropout probability {} outside [0, 1)", p);
        if !self.train_mode || p == 0.0 {
            return x;
        }
        let n = self.value(x).numel();
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let tx = self.value(x);
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(tx.shape(), data);
        let req = self.requires(x);
        self.push(out, Op::Dropout { x, mask: Arc::new(mask) }, req)
    }

    /// Gathers rows of an embedding table: out[t] = table[ids[t]].
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let tt = self.value(table);
        let (v, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(
                id < v,
                "embedding: token id {} out of range for table of shape {:?}",
                id,
                tt.shape()
            );
            data.extend_from_slice(&tt.data()[id * d..(id + 1) * d]);
        }
        let out = Tensor::new(&[ids.len(), d], data);
        let req = self.requires(table);
        self.push(out, Op::Embedding { table, ids: Arc::new(ids.to_vec()) }, req)
    }

    /// Concatenates two matrices with equal row counts along the feature axis.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, n1) = (ta.rows(), ta.cols());
        let (m2, n2) = (tb.rows(), tb.cols());
        assert_eq!(
            m, m2,
            "concat_cols: row counts differ (lhs {:?}, rhs {:?})",
            ta.shape(),
            tb.shape()
        );
        let mut data = Vec::with_capacity(m * (n1 + n2));
        for i in 0..m {
            data.extend_from_slice(&ta.data()[i * n1..(i + 1) * n1]);
            data.extend_from_slice(&tb.data()[i * n2..(i + 1) * n2]);
        }
        let out = Tensor::new(&[m, n1 + n2], data);
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::ConcatCols(a, b), req)
    }

    /// Takes columns [start, end) of every row.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        assert!(
            start < end && end <= n,
            "slice_cols: range {}..{} invalid for input shape {:?}",
            start,
            end,
            tx.shape()
        );
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&tx.data()[i * n + start..i * n + end]);
        }
        let out = Tensor::new(&[m, w], data);
        let req = self.requires(x);
        self.push(out, Op::SliceCols { x, start, end }, req)
    }

    /// Pools a T×d sequence into ⌈T/stride⌉ slots along the time axis. Slot s
    /// covers input rows [s·stride, s·stride + window) clipped to T. Rows
    /// where `valid` is false are ignored; average pooling divides by the
    /// number of valid rows actually covered, and max pooling breaks ties
    /// toward the lowest row index. A slot covering no valid rows yields a
    /// zero vector and a false entry in the returned slot mask. T = 0 yields
    /// a single invalid zero slot.
    pub fn pool_over_time(
        &mut self,
        x: NodeId,
        mode: PoolMode,
        window: usize,
        stride: usize,
        valid: &[bool],
    ) -> (NodeId, Vec<bool>) {
        assert!(window > 0 && stride > 0, "pool_over_time: window and stride must be positive");
        let tx = self.value(x);
        let (t, d) = if tx.numel() == 0 { (0, tx.cols()) } else { (tx.rows(), tx.cols()) };
        assert_eq!(
            valid.len(),
            t,
            "pool_over_time: validity mask length {} does not match {} input rows",
            valid.len(),
            t
        );
        let slots = if t == 0 { 1 } else { t.div_ceil(stride) };
        let mut data = vec![0.0; slots * d];
        let mut argmax = vec![usize::MAX; if mode == PoolMode::Max { slots * d } else { 0 }];
        let mut counts = vec![0usize; slots];
        let mut slot_mask = vec![false; slots];
        for s in 0..slots {
            let lo = s * stride;
            let hi = (lo + window).min(t);
            let rows: Vec<usize> = (lo..hi).filter(|&r| valid[r]).collect();
            counts[s] = rows.len();
            if rows.is_empty() {
                continue;
            }
            slot_mask[s] = true;
            match mode {
                PoolMode::Avg => {
                    let inv = 1.0 / rows.len() as f64;
                    for &r in &rows {
                        for j in 0..d {
                            data[s * d + j] += tx.data()[r * d + j] * inv;
                        }
                    }
                }
                PoolMode::Max => {
                    for j in 0..d {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_row = usize::MAX;
                        for &r in &rows {
                            let v = tx.data()[r * d + j];
                            if v > best {
                                best = v;
                                best_row = r;
                            }
                        }
                        data[s * d + j] = best;
                        argmax[s * d + j] = best_row;
                    }
                }
            }
        }
        let out = Tensor::new(&[slots, d], data);
        let req = self.requires(x);
        let id = self.push(
            out,
            Op::PoolOverTime {
                x,
                mode,
                window,
                stride,
                argmax: Arc::new(argmax),
                valid: Arc::new(valid.to_vec()),
                counts: Arc::new(counts),
            },
            req,
        );
        (id, slot_mask)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let tx = self.value(x);
        let out = Tensor::scalar(tx.data().iter().sum());
        let req = self.requires(x);
        self.push(out, Op::SumAll(x), req)
    }

    /// Label-smoothed NLL summed over positions. `log_probs` is T×V and must
    /// already be log-softmaxed; `gold` holds the T reference token ids. With
    /// smoothing ε, the gold token gets weight 1-ε and the remaining mass is
    /// spread over the V-2 tokens that are neither gold nor `excluded`.
    /// Positions whose gold id equals `excluded` are padding: they contribute
    /// neither loss nor gradient.
    pub fn nll_smoothed(
        &mut self,
        log_probs: NodeId,
        gold: &[usize],
        eps: f64,
        excluded: usize,
    ) -> NodeId {
        let tl = self.value(log_probs);
        let (t, v) = (tl.rows(), tl.cols());
        assert_eq!(
            gold.len(),
            t,
            "nll_smoothed: {} gold tokens for log-prob matrix of shape {:?}",
            gold.len(),
            tl.shape()
        );
        assert!(v > 2, "nll_smoothed: vocabulary of size {} leaves no room for smoothing", v);
        let smooth = eps / (v - 2) as f64;
        let mut total = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            assert!(g < v, "nll_smoothed: gold id {} out of range for vocab {}", g, v);
            if g == excluded {
                continue;
            }
            let row = &tl.data()[i * v..(i + 1) * v];
            let mut pos = -(1.0 - eps) * row[g];
            if eps > 0.0 {
                for (j, &lp) in row.iter().enumerate() {
                    if j != g && j != excluded {
                        pos -= smooth * lp;
                    }
                }
            }
            total += pos;
        }
        let out = Tensor::scalar(total);
        let req = self.requires(log_probs);
        self.push(
            out,
            Op::NllSmoothed { log_probs, gold: Arc::new(gold.to_vec()), eps, excluded },
            req,
        )
    }

    // ── Backward pass ──────────────────────────────────────────────────────

    /// Backpropagates from a scalar node with seed gradient 1.
    pub fn backward(&mut self, loss: NodeId) {
        self.backward_weighted(loss, 1.0);
    }

    /// Backpropagates from a scalar node with the given seed gradient. Useful
    /// for weighting per-example losses before cross-tape accumulation.
    pub fn backward_weighted(&mut self, loss: NodeId, weight: f64) {
        assert_eq!(
            self.value(loss).numel(),
            1,
            "backward: loss node must be scalar, got shape {:?}",
            self.value(loss).shape()
        );
        self.ensure_grad(loss);
        self.nodes[loss.0].grad.as_mut().unwrap().data_mut()[0] += weight;
        for i in (0..self.nodes.len()).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            self.step_backward(i);
        }
    }

    /// Looks up the node a parameter name was bound to, if any.
    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }

    /// Gradients of all bound parameters after a backward pass, keyed by name.
    /// Parameters that received no gradient are reported as zeros.
    pub fn param_grads(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = Vec::with_capacity(self.params.len());
        let mut names: Vec<&String> = self.params.keys().collect();
        names.sort();
        for name in names {
            let id = self.params[name];
            let g = match &self.nodes[id.0].grad {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.nodes[id.0].value.get().shape()),
            };
            out.push((name.clone(), g));
        }
        out
    }

    fn ensure_grad(&mut self, id: NodeId) {
        if self.nodes[id.0].grad.is_none() {
            let shape = self.nodes[id.0].value.get().shape().to_vec();
            self.nodes[id.0].grad = Some(Tensor::zeros(&shape));
        }
    }

    fn step_backward(&mut self, i: usize) {
        // Inputs always precede outputs on the tape, so split_at_mut gives
        // simultaneous access to the output node and its input gradients.
        let grad = self.nodes[i].grad.take().expect("grad present by construction");
        let (inputs, rest) = self.nodes.split_at_mut(i);
        let node = &rest[0];
        let out_val = node.value.get();
        let g = grad.data();

        // Applies a contribution to one input's gradient buffer, allocating
        // it on first touch. Inputs that do not require gradients are skipped.
        fn acc(inputs: &mut [Node], id: NodeId, f: &mut dyn FnMut(&mut [f64])) {
            let n = &mut inputs[id.0];
            if !n.requires_grad {
                return;
            }
            if n.grad.is_none() {
                n.grad = Some(Tensor::zeros(n.value.get().shape()));
            }
            f(n.grad.as_mut().unwrap().data_mut());
        }

        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                acc(inputs, a, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += gv;
                    }
                });
                acc(inputs, b, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                acc(inputs, a, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += gv;
                    }
                });
                acc(inputs, b, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let av: Vec<f64> = inputs[a.0].value.get().data().to_vec();
                let bv: Vec<f64> = inputs[b.0].value.get().data().to_vec();
                acc(inputs, a, &mut |gb| {
                    for ((o, &gv), &x) in gb.iter_mut().zip(g).zip(&bv) {
                        *o += gv * x;
                    }
                });
                acc(inputs, b, &mut |gb| {
                    for ((o, &gv), &x) in gb.iter_mut().zip(g).zip(&av) {
                        *o += gv * x;
                    }
                });
            }
            Op::AffineConst { x, mul } => {
                let (x, mul) = (*x, *mul);
                acc(inputs, x, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += gv * mul;
                    }
                });
            }
            Op::AddBias { x, bias } => {
                let (x, bias) = (*x, *bias);
                let (m, n) = (out_val.rows(), out_val.cols());
                acc(inputs, x, &mut |gb| {
                    for (o, &gv) in gb.iter_mut().zip(g) {
                        *o += gv;
                    }
                });
                acc(inputs, bias, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j];
                        }
                    }
                });
            }
            Op::MulColVec { x, col } => {
                let (x, col) = (*x, *col);
                let (m, n) = (out_val.rows(), out_val.cols());
                let cv: Vec<f64> = inputs[col.0].value.get().data().to_vec();
                let xv: Vec<f64> = inputs[x.0].value.get().data().to_vec();
                acc(inputs, x, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            gb[i * n + j] += g[i * n + j] * cv[i];
                        }
                    }
                });
                acc(inputs, col, &mut |gb| {
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * xv[i * n + j];
                        }
                        gb[i] += s;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let av: Vec<f64> = inputs[a.0].value.get().data().to_vec();
                let bv: Vec<f64> = inputs[b.0].value.get().data().to_vec();
                let m = inputs[a.0].value.get().rows();
                let k = inputs[a.0].value.get().cols();
                let n = out_val.cols();
                // dA = dOut · Bᵀ, dB = Aᵀ · dOut
                acc(inputs, a, &mut |gb| matmul_nt_acc(gb, g, &bv, m, n, k));
                acc(inputs, b, &mut |gb| matmul_tn_acc(gb, &av, g, m, k, n));
            }
            Op::MatMulNT(a, b) => {
                let (a, b) = (*a, *b);
                let av: Vec<f64> = inputs[a.0].value.get().data().to_vec();
                let bv: Vec<f64> = inputs[b.0].value.get().data().to_vec();
                let m = inputs[a.0].value.get().rows();
                let k = inputs[a.0].value.get().cols();
                let n = out_val.cols();
                // Out = A · Bᵀ: dA = dOut · B, dB = dOutᵀ · A
                acc(inputs, a, &mut |gb| matmul_acc(gb, g, &bv, m, n, k));
                acc(inputs, b, &mut |gb| matmul_tn_acc(gb, g, &av, m, n, k));
            }
            Op::Relu(x) => {
                let x = *x;
                let ov: Vec<f64> = out_val.data().to_vec();
                acc(inputs, x, &mut |gb| {
                    for ((o, &gv), &y) in gb.iter_mut().zip(g).zip(&ov) {
                        if y > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let x = *x;
                let ov: Vec<f64> = out_val.data().to_vec();
                acc(inputs, x, &mut |gb| {
                    for ((o, &gv), &y) in gb.iter_mut().zip(g).zip(&ov) {
                        *o += gv * y * (1.0 - y);
                    }
                });
            }
            Op::SoftmaxRows { x } => {
                // dx = y ⊙ (dy − ⟨y, dy⟩) per row; masked columns have y = 0
                // and fully masked rows have y ≡ 0, so both fall out.
                let x = *x;
                let (m, n) = (out_val.rows(), out_val.cols());
                let y: Vec<f64> = out_val.data().to_vec();
                acc(inputs, x, &mut |gb| {
                    for i in 0..m {
                        let yr = &y[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            gb[i * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmaxRows(x) => {
                // dx = dy − softmax(x) ⊙ Σ dy per row; softmax = exp(out).
                let x = *x;
                let (m, n) = (out_val.rows(), out_val.cols());
                let y: Vec<f64> = out_val.data().to_vec();
                acc(inputs, x, &mut |gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..n {
                            gb[i * n + j] += gr[j] - y[i * n + j].exp() * gsum;
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let (x, gain, bias, eps) = (*x, *gain, *bias, *eps);
                let (m, n) = (out_val.rows(), out_val.cols());
                let xv: Vec<f64> = inputs[x.0].value.get().data().to_vec();
                let gv: Vec<f64> = inputs[gain.0].value.get().data().to_vec();
                // Recompute per-row statistics; cheaper than caching them.
                let mut normed = vec![0.0; m * n];
                let mut inv_std = vec![0.0; m];
                for i in 0..m {
                    let row = &xv[i * n..(i + 1) * n];
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    inv_std[i] = 1.0 / (var + eps).sqrt();
                    for j in 0..n {
                        normed[i * n + j] = (row[j] - mean) * inv_std[i];
                    }
                }
                acc(inputs, bias, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j];
                        }
                    }
                });
                acc(inputs, gain, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j] * normed[i * n + j];
                        }
                    }
                });
                acc(inputs, x, &mut |gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let nr = &normed[i * n..(i + 1) * n];
                        // dy_hat = dout ⊙ gain, then the standard layer-norm
                        // input gradient in terms of the normalized values.
                        let mut mean_dy = 0.0;
                        let mut mean_dy_y = 0.0;
                        for j in 0..n {
                            let dy = gr[j] * gv[j];
                            mean_dy += dy;
                            mean_dy_y += dy * nr[j];
                        }
                        mean_dy /= n as f64;
                        mean_dy_y /= n as f64;
                        for j in 0..n {
                            let dy = gr[j] * gv[j];
                            gb[i * n + j] += inv_std[i] * (dy - mean_dy - nr[j] * mean_dy_y);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let mask = Arc::clone(mask);
                acc(inputs, x, &mut |gb| {
                    for ((o, &gv), &mv) in gb.iter_mut().zip(g).zip(mask.iter()) {
                        *o += gv * mv;
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                let ids = Arc::clone(ids);
                let d = out_val.cols();
                acc(inputs, table, &mut |gb| {
                    for (t, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gb[id * d + j] += g[t * d + j];
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let m = out_val.rows();
                let n1 = inputs[a.0].value.get().cols();
                let n2 = inputs[b.0].value.get().cols();
                acc(inputs, a, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n1 {
                            gb[i * n1 + j] += g[i * (n1 + n2) + j];
                        }
                    }
                });
                acc(inputs, b, &mut |gb| {
                    for i in 0..m {
                        for j in 0..n2 {
                            gb[i * n2 + j] += g[i * (n1 + n2) + n1 + j];
                        }
                    }
                });
            }
            Op::SliceCols { x, start, end } => {
                let (x, start, end) = (*x, *start, *end);
                let m = out_val.rows();
                let w = end - start;
                let n = inputs[x.0].value.get().cols();
                acc(inputs, x, &mut |gb| {
                    for i in 0..m {
                        for j in 0..w {
                            gb[i * n + start + j] += g[i * w + j];
                        }
                    }
                });
            }
            Op::PoolOverTime { x, mode, window, stride, argmax, valid, counts } => {
                let (x, mode, window, stride) = (*x, *mode, *window, *stride);
                let argmax = Arc::clone(argmax);
                let valid = Arc::clone(valid);
                let counts = Arc::clone(counts);
                let slots = out_val.rows();
                let d = out_val.cols();
                acc(inputs, x, &mut |gb| match mode {
                    PoolMode::Avg => {
                        let t = valid.len();
                        for s in 0..slots {
                            if counts[s] == 0 {
                                continue;
                            }
                            let inv = 1.0 / counts[s] as f64;
                            let lo = s * stride;
                            let hi = (lo + window).min(t);
                            for r in lo..hi {
                                if !valid[r] {
                                    continue;
                                }
                                for j in 0..d {
                                    gb[r * d + j] += g[s * d + j] * inv;
                                }
                            }
                        }
                    }
                    PoolMode::Max => {
                        for s in 0..slots {
                            for j in 0..d {
                                let r = argmax[s * d + j];
                                if r != usize::MAX {
                                    gb[r * d + j] += g[s * d + j];
                                }
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let x = *x;
                let gv = g[0];
                acc(inputs, x, &mut |gb| {
                    for o in gb.iter_mut() {
                        *o += gv;
                    }
                });
            }
            Op::NllSmoothed { log_probs, gold, eps, excluded } => {
                let lp = *log_probs;
                let gold = Arc::clone(gold);
                let (eps, excluded) = (*eps, *excluded);
                let gv = g[0];
                let v = inputs[lp.0].value.get().cols();
                let smooth = eps / (v - 2) as f64;
                acc(inputs, lp, &mut |gb| {
                    for (i, &gd) in gold.iter().enumerate() {
                        if gd == excluded {
                            continue;
                        }
                        for j in 0..v {
                            let w = if j == gd {
                                1.0 - eps
                            } else if j == excluded {
                                0.0
                            } else {
                                smooth
                            };
                            if w != 0.0 {
                                gb[i * v + j] -= gv * w;
                            }
                        }
                    }
                });
            }
        }
        self.nodes[i].grad = Some(grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(&[rows, cols], data.to_vec())
    }

    #[test]
    fn param_binding_is_deduplicated() {
        let mut tape = Tape::new(0);
        let w = Arc::new(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let a = tape.param("w", Arc::clone(&w));
        let b = tape.param("w", Arc::clone(&w));
        assert_eq!(a, b, "same parameter name must map to the same node");
    }

    #[test]
    fn tied_parameter_accumulates_both_uses() {
        // loss = sum(w · x) + sum(w · y); dw = x_sumsᵀ + y_sumsᵀ over both uses.
        let mut tape = Tape::new(0);
        let w = Arc::new(t2(1, 2, &[1.0, -1.0]));
        let wid = tape.param("w", w);
        let x = tape.leaf(t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = tape.leaf(t2(2, 3, &[0.5, 0.5, 0.5, 1.0, 1.0, 1.0]));
        let wx = tape.matmul(wid, x);
        let wy = tape.matmul(wid, y);
        let s1 = tape.sum_all(wx);
        let s2 = tape.sum_all(wy);
        let total = tape.add(s1, s2);
        tape.backward(total);
        let grad = tape.grad(wid).expect("tied parameter must receive a gradient");
        // d/dw[0] = sum of x row 0 + sum of y row 0 = 6 + 1.5
        assert!((grad.data()[0] - 7.5).abs() < 1e-12);
        // d/dw[1] = sum of x row 1 + sum of y row 1 = 15 + 3
        assert!((grad.data()[1] - 18.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let y = tape.softmax_rows(x);
        for i in 0..2 {
            let s: f64 = tape.value(y).row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {} sums to {}", i, s);
        }
    }

    #[test]
    fn fully_masked_softmax_row_is_zero_not_nan() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(2, 3, &[5.0, 1.0, 2.0, 4.0, 4.0, 4.0]));
        let mask = vec![true, true, false, false, false, false];
        let y = tape.masked_softmax_rows(x, &mask);
        let row1 = tape.value(y).row(1);
        assert_eq!(row1, &[0.0, 0.0, 0.0], "fully masked row must be exactly zero");
        assert!(tape.value(y).data().iter().all(|v| v.is_finite()));
        // Gradient flows cleanly through the surviving row only.
        let s = tape.sum_all(y);
        tape.backward(s);
        let gx = tape.grad(x);
        assert!(gx.is_none() || gx.unwrap().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn masked_softmax_renormalizes_kept_columns() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(1, 3, &[1.0, 2.0, 3.0]));
        let y = tape.masked_softmax_rows(x, &[true, false, true]);
        let row = tape.value(y).row(0);
        assert_eq!(row[1], 0.0);
        let e1 = 1f64.exp();
        let e3 = 3f64.exp();
        assert!((row[0] - e1 / (e1 + e3)).abs() < 1e-12);
        assert!((row[2] - e3 / (e1 + e3)).abs() < 1e-12);
    }

    #[test]
    fn pool_avg_divides_by_valid_count() {
        let mut tape = Tape::new(0);
        // T=3, d=2, window=2, stride=2 → 2 slots: rows {0,1}, {2}.
        let x = tape.leaf(t2(3, 2, &[1.0, 10.0, 3.0, 20.0, 5.0, 30.0]));
        let (y, mask) = tape.pool_over_time(x, PoolMode::Avg, 2, 2, &[true, true, true]);
        assert_eq!(tape.value(y).shape(), &[2, 2]);
        assert_eq!(mask, vec![true, true]);
        assert_eq!(tape.value(y).row(0), &[2.0, 15.0]);
        assert_eq!(tape.value(y).row(1), &[5.0, 30.0]);
    }

    #[test]
    fn pool_avg_skips_invalid_rows() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(3, 1, &[1.0, 100.0, 3.0]));
        // Middle row invalid: slot 0 averages only row 0.
        let (y, mask) = tape.pool_over_time(x, PoolMode::Avg, 2, 2, &[true, false, true]);
        assert_eq!(mask, vec![true, true]);
        assert_eq!(tape.value(y).row(0), &[1.0]);
        assert_eq!(tape.value(y).row(1), &[3.0]);
    }

    #[test]
    fn pool_max_breaks_ties_toward_lowest_index() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(2, 1, &[7.0, 7.0]));
        let (y, _) = tape.pool_over_time(x, PoolMode::Max, 2, 2, &[true, true]);
        assert_eq!(tape.value(y).row(0), &[7.0]);
        let s = tape.sum_all(y);
        tape.backward(s);
        // The gradient must land on the first of the tied rows.
        // Leaves do not require grad, so rebuild with a param to observe it.
        let mut tape = Tape::new(0);
        let w = Arc::new(t2(2, 1, &[7.0, 7.0]));
        let wid = tape.param("w", w);
        let (y, _) = tape.pool_over_time(wid, PoolMode::Max, 2, 2, &[true, true]);
        let s = tape.sum_all(y);
        tape.backward(s);
        let g = tape.grad(wid).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0], "tie must resolve to the lowest row index");
    }

    #[test]
    fn pool_empty_window_yields_invalid_zero_slot() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let (y, mask) = tape.pool_over_time(x, PoolMode::Max, 2, 2, &[false, false]);
        assert_eq!(mask, vec![false]);
        assert_eq!(tape.value(y).row(0), &[0.0, 0.0]);
    }

    #[test]
    fn pool_empty_input_yields_single_invalid_slot() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(Tensor::new(&[0, 3], vec![]));
        let (y, mask) = tape.pool_over_time(x, PoolMode::Avg, 10, 10, &[]);
        assert_eq!(tape.value(y).shape(), &[1, 3]);
        assert_eq!(mask, vec![false]);
        assert_eq!(tape.value(y).row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_slot_count_is_ceil_t_over_stride() {
        let mut tape = Tape::new(0);
        let x = tape.leaf(Tensor::zeros(&[7, 1]));
        let (y, _) = tape.pool_over_time(x, PoolMode::Avg, 3, 3, &[true; 7]);
        assert_eq!(tape.value(y).rows(), 3, "ceil(7/3) slots expected");
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut tape = Tape::new(42);
        let x = tape.leaf(t2(1, 4, &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.dropout(x, 0.5);
        assert_eq!(x, y, "eval-mode dropout must be a no-op node");
    }

    #[test]
    fn dropout_is_deterministic_given_tape_seed() {
        let run = |seed: u64| -> Vec<f64> {
            let mut tape = Tape::new(seed);
            tape.set_train(true);
            let x = tape.leaf(Tensor::filled(&[1, 32], 1.0));
            let y = tape.dropout(x, 0.5);
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(7), run(7), "same seed, same mask");
        assert_ne!(run(7), run(8), "different seed should give a different mask");
    }

    #[test]
    fn embedding_gradient_scatters_to_used_rows() {
        let mut tape = Tape::new(0);
        let table = Arc::new(t2(4, 2, &[0.0, 0.1, 1.0, 1.1, 2.0, 2.1, 3.0, 3.1]));
        let tid = tape.param("embed", table);
        let e = tape.embedding(tid, &[2, 0, 2]);
        assert_eq!(tape.value(e).row(0), &[2.0, 2.1]);
        let s = tape.sum_all(e);
        tape.backward(s);
        let g = tape.grad(tid).unwrap();
        // Row 2 used twice, row 0 once, rows 1 and 3 never.
        assert_eq!(g.data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn nll_smoothed_matches_hand_computation() {
        // V=4, one position, gold=1, pad=0, eps=0.3 → smooth mass 0.15 each on
        // tokens 2 and 3.
        let mut tape = Tape::new(0);
        let logits = tape.leaf(t2(1, 4, &[0.0, 1.0, 2.0, 3.0]));
        let lp = tape.log_softmax_rows(logits);
        let loss = tape.nll_smoothed(lp, &[1], 0.3, 0);
        let row: Vec<f64> = tape.value(lp).row(0).to_vec();
        let expected = -(0.7 * row[1] + 0.15 * row[2] + 0.15 * row[3]);
        assert!((tape.value(loss).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nll_unsmoothed_is_plain_cross_entropy() {
        let mut tape = Tape::new(0);
        let logits = tape.leaf(t2(2, 3, &[1.0, 2.0, 0.5, 0.0, -1.0, 0.2]));
        let lp = tape.log_softmax_rows(logits);
        let loss = tape.nll_smoothed(lp, &[1, 2], 0.0, 0);
        let expected = -(tape.value(lp).at(0, 1) + tape.value(lp).at(1, 2));
        assert!((tape.value(loss).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn independent_tapes_work_across_threads() {
        let w = Arc::new(t2(2, 2, &[0.5, -0.5, 1.0, 2.0]));
        let grads: Vec<Vec<f64>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..2)
                .map(|_| {
                    let w = Arc::clone(&w);
                    s.spawn(move || {
                        let mut tape = Tape::new(0);
                        let wid = tape.param("w", w);
                        let x = tape.leaf(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
                        let y = tape.matmul(wid, x);
                        let l = tape.sum_all(y);
                        tape.backward(l);
                        tape.grad(wid).unwrap().data().to_vec()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(grads[0], grads[1], "identical tapes must agree across threads");
    }
}

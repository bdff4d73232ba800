//! Differentiable sequence-to-sequence translation models.
//!
//! Two toy-scale architectures share one parameter store and one loss
//! construction: a bidirectional GRU encoder-decoder with multiplicative
//! attention, and a transformer. Both expose beam-search translation, the
//! teacher-forced negative-log-likelihood loss, and the three gradient
//! surfaces the attacks consume: gradients w.r.t. input embeddings, w.r.t.
//! the one-hot input rows, and w.r.t. a relaxed probability row.
//!
//! Embedding lookup is literally a one-hot-by-matrix product in the graph;
//! the relaxed input row replaces the one-hot row with `p * E` restricted to
//! its support, so hard and relaxed losses agree bit-for-bit at the vertices
//! of the simplex.

mod beam;
mod rnn;
mod transformer;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Graph, NodeId, Tensor};
use crate::tokenizer::{BOS, EOS};

pub use beam::Translation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("source length {len} exceeds max sequence length {max}")]
    SourceTooLong { len: usize, max: usize },
    #[error("invalid input representation: {0}")]
    BadInput(String),
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    RecurrentAttention,
    Transformer,
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchKind::RecurrentAttention => write!(f, "recurrent-attention"),
            ArchKind::Transformer => write!(f, "transformer"),
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "recurrent-attention" | "rnn" => Ok(ArchKind::RecurrentAttention),
            "transformer" => Ok(ArchKind::Transformer),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: ArchKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return Err(ModelError::BadConfig("zero dimension".into()));
        }
        match self.arch {
            ArchKind::Transformer => {
                if self.heads == 0 || self.embed_dim % self.heads != 0 {
                    return Err(ModelError::BadConfig(format!(
                        "heads {} must divide embed dim {}",
                        self.heads, self.embed_dim
                    )));
                }
                if self.layers == 0 {
                    return Err(ModelError::BadConfig("transformer needs >= 1 layer".into()));
                }
            }
            ArchKind::RecurrentAttention => {
                if self.layers != 1 {
                    return Err(ModelError::BadConfig(
                        "recurrent-attention supports exactly 1 layer".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// n rows over the shared vocabulary; each row one-hot or a distribution.
#[derive(Debug, Clone)]
pub struct InputRepresentation {
    n: usize,
    vocab: usize,
    rows: Vec<f32>,
}

impl InputRepresentation {
    pub fn one_hot(ids: &[u32], vocab: usize) -> Self {
        let mut rows = vec![0.0f32; ids.len() * vocab];
        for (i, &id) in ids.iter().enumerate() {
            rows[i * vocab + id as usize] = 1.0;
        }
        InputRepresentation { n: ids.len(), vocab, rows }
    }

    /// One-hot rows with row `r` replaced by a distribution over `support`.
    pub fn with_distribution_row(
        ids: &[u32],
        vocab: usize,
        r: usize,
        support: &[(u32, f32)],
    ) -> Self {
        let mut x = Self::one_hot(ids, vocab);
        for v in &mut x.rows[r * vocab..(r + 1) * vocab] {
            *v = 0.0;
        }
        for &(id, p) in support {
            x.rows[r * vocab + id as usize] = p;
        }
        x
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.vocab..(i + 1) * self.vocab]
    }

    /// Every row nonnegative with sum 1 within 1e-6.
    pub fn validate(&self) -> Result<(), ModelError> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|&v| v < 0.0) {
                return Err(ModelError::BadInput(format!("row {i} has negative mass")));
            }
            let s: f32 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(ModelError::BadInput(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    fn row_is_one_hot(&self, i: usize) -> bool {
        let row = self.row(i);
        let mut ones = 0usize;
        for &v in row {
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return false;
            }
        }
        ones == 1
    }

    /// Token id of a one-hot row.
    fn row_token(&self, i: usize) -> Option<u32> {
        let row = self.row(i);
        row.iter().position(|&v| v == 1.0).map(|p| p as u32)
    }

    pub(crate) fn tensor(&self) -> Tensor {
        Tensor::matrix(self.n, self.vocab, self.rows.clone())
    }
}

/// One translation model: shared embedding matrix plus architecture
/// parameters. Parameters are immutable during attack and evaluation.
#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

/// Graph handles for every parameter, bound once per loss graph.
pub(crate) struct ParamNodes {
    nodes: BTreeMap<String, NodeId>,
}

impl ParamNodes {
    pub(crate) fn get(&self, name: &str) -> NodeId {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }
}

impl Seq2SeqModel {
    /// Fresh model with uniform Xavier-style initialization; deterministic in
    /// the seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let v = config.vocab_size;
        let d = config.embed_dim;
        let h = config.hidden_dim;

        let mat = |params: &mut Vec<(String, Tensor)>,
                       rng: &mut ChaCha8Rng,
                       name: &str,
                       rows: usize,
                       cols: usize| {
            let a = (6.0 / (rows + cols) as f32).sqrt();
            let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
            params.push((name.to_string(), Tensor::matrix(rows, cols, data)));
        };
        let zeros = |params: &mut Vec<(String, Tensor)>, name: &str, n: usize| {
            params.push((name.to_string(), Tensor::vector(vec![0.0; n])));
        };
        let ones = |params: &mut Vec<(String, Tensor)>, name: &str, n: usize| {
            params.push((name.to_string(), Tensor::vector(vec![1.0; n])));
        };

        mat(&mut params, &mut rng, "embed", v, d);
        match config.arch {
            ArchKind::RecurrentAttention => {
                for dir in ["enc_f", "enc_b"] {
                    for gate in ["z", "r", "h"] {
                        mat(&mut params, &mut rng, &format!("{dir}.w{gate}"), d, h);
                        mat(&mut params, &mut rng, &format!("{dir}.u{gate}"), h, h);
                        zeros(&mut params, &format!("{dir}.b{gate}"), h);
                    }
                }
                for gate in ["z", "r", "h"] {
                    mat(&mut params, &mut rng, &format!("dec.w{gate}"), d, h);
                    mat(&mut params, &mut rng, &format!("dec.u{gate}"), h, h);
                    zeros(&mut params, &format!("dec.b{gate}"), h);
                }
                mat(&mut params, &mut rng, "init_w", 2 * h, h);
                zeros(&mut params, "init_b", h);
                mat(&mut params, &mut rng, "att_w", h, 2 * h);
                mat(&mut params, &mut rng, "comb_w", 3 * h, h);
                zeros(&mut params, "comb_b", h);
                mat(&mut params, &mut rng, "out_w", h, v);
                zeros(&mut params, "out_b", v);
            }
            ArchKind::Transformer => {
                for l in 0..config.layers {
                    for (blk, names) in [
                        (format!("enc{l}.attn"), true),
                        (format!("dec{l}.self"), true),
                        (format!("dec{l}.cross"), true),
                        (format!("enc{l}.ff"), false),
                        (format!("dec{l}.ff"), false),
                    ] {
                        if names {
                            for w in ["wq", "wk", "wv", "wo"] {
                                mat(&mut params, &mut rng, &format!("{blk}.{w}"), d, d);
                            }
                        } else {
                            mat(&mut params, &mut rng, &format!("{blk}.w1"), d, h);
                            zeros(&mut params, &format!("{blk}.b1"), h);
                            mat(&mut params, &mut rng, &format!("{blk}.w2"), h, d);
                            zeros(&mut params, &format!("{blk}.b2"), d);
                        }
                    }
                    for ln in [
                        format!("enc{l}.ln1"),
                        format!("enc{l}.ln2"),
                        format!("dec{l}.ln1"),
                        format!("dec{l}.ln2"),
                        format!("dec{l}.ln3"),
                    ] {
                        ones(&mut params, &format!("{ln}.g"), d);
                        zeros(&mut params, &format!("{ln}.b"), d);
                    }
                }
                mat(&mut params, &mut rng, "out_w", d, v);
                zeros(&mut params, "out_b", v);
            }
        }
        Ok(Seq2SeqModel { config, params: params.into_iter().collect() })
    }

    pub fn from_params(
        config: ModelConfig,
        params: BTreeMap<String, Tensor>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let fresh = Seq2SeqModel::new(config.clone(), 0)?;
        if fresh.params.len() != params.len()
            || !fresh
                .params
                .iter()
                .zip(&params)
                .all(|((an, at), (bn, bt))| an == bn && at.shape() == bt.shape())
        {
            return Err(ModelError::BadConfig(
                "parameter names/shapes do not match the configuration".into(),
            ));
        }
        Ok(Seq2SeqModel { config, params })
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub(crate) fn set_params(&mut self, params: BTreeMap<String, Tensor>) {
        self.params = params;
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|t| t.all_finite())
    }

    /// Bind every parameter into the graph; differentiable when training.
    pub(crate) fn bind_params(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        let mut nodes = BTreeMap::new();
        for (name, t) in &self.params {
            let id = if trainable { g.input_grad(t.clone()) } else { g.input(t.clone()) };
            nodes.insert(name.clone(), id);
        }
        ParamNodes { nodes }
    }

    fn check_src_len(&self, n: usize) -> Result<(), ModelError> {
        if n == 0 {
            return Err(ModelError::BadInput("empty source".into()));
        }
        if n > self.config.max_len {
            return Err(ModelError::SourceTooLong { len: n, max: self.config.max_len });
        }
        Ok(())
    }

    /// Scalar teacher-forced loss node given an already-embedded source.
    pub(crate) fn build_loss_from_e(
        &self,
        g: &mut Graph,
        pn: &ParamNodes,
        e_src: NodeId,
        src_len: usize,
        target: &[u32],
    ) -> NodeId {
        match self.config.arch {
            ArchKind::RecurrentAttention => {
                rnn::build_loss(self, g, pn, e_src, src_len, target)
            }
            ArchKind::Transformer => {
                transformer::build_loss(self, g, pn, e_src, src_len, target)
            }
        }
    }

    /// Decoder-input embeddings (BOS followed by the target prefix) via a
    /// one-hot-by-embedding product.
    pub(crate) fn target_input_embeddings(
        &self,
        g: &mut Graph,
        pn: &ParamNodes,
        target: &[u32],
    ) -> NodeId {
        let mut ids = Vec::with_capacity(target.len());
        ids.push(BOS);
        ids.extend_from_slice(&target[..target.len() - 1]);
        let x = InputRepresentation::one_hot(&ids, self.config.vocab_size);
        let xn = g.input(x.tensor());
        let e = pn.get("embed");
        g.matmul(xn, e)
    }

    /// Sum of -log q(t_i | t_<i, x) over the target, composed from softmax,
    /// log, a one-hot mask and a sum.
    pub(crate) fn nll_from_logits(&self, g: &mut Graph, logits: NodeId, target: &[u32]) -> NodeId {
        let v = self.config.vocab_size;
        let probs = g.softmax(logits);
        let logp = g.log(probs);
        let mask = InputRepresentation::one_hot(target, v);
        let mask_node = g.input(mask.tensor());
        let picked = g.mul(logp, mask_node);
        let total = g.sum(picked);
        g.scale(total, -1.0)
    }

    /// Teacher-forced NLL of `target` under input `x` (Eq. 1 with x allowed
    /// to hold distribution rows).
    pub fn nll_loss(&self, x: &InputRepresentation, target: &[u32]) -> Result<f32, ModelError> {
        x.validate()?;
        self.check_src_len(x.len())?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let xn = g.input(x.tensor());
        let e = pn.get("embed");
        let e_src = g.matmul(xn, e);
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, x.len(), target);
        Ok(g.value(loss).data()[0])
    }

    /// NLL with trailing positions masked out of attention and loss: only the
    /// first `src_len` rows of `x` are consumed.
    pub fn nll_loss_masked(
        &self,
        x: &InputRepresentation,
        target: &[u32],
        src_len: usize,
    ) -> Result<f32, ModelError> {
        x.validate()?;
        self.check_src_len(src_len)?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let xn = g.input(x.tensor());
        let e = pn.get("embed");
        let e_src = g.matmul(xn, e);
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src_len, target);
        Ok(g.value(loss).data()[0])
    }

    /// Hard one-hot sentence loss.
    pub fn sentence_loss(&self, src: &[u32], target: &[u32]) -> Result<f32, ModelError> {
        self.nll_loss(&InputRepresentation::one_hot(src, self.config.vocab_size), target)
    }

    /// Loss and the gradient of the loss w.r.t. every input embedding row
    /// (the Min-Grad surface). `x` must be one-hot.
    pub fn embedding_gradients(
        &self,
        src: &[u32],
        target: &[u32],
    ) -> Result<(f32, Vec<Vec<f32>>), ModelError> {
        self.check_src_len(src.len())?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let d = self.config.embed_dim;
        let embed = &self.params["embed"];
        let mut rows = Vec::with_capacity(src.len() * d);
        for &id in src {
            rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
        }
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let e_src = g.input_grad(Tensor::matrix(src.len(), d, rows));
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src.len(), target);
        let value = g.value(loss).data()[0];
        g.backward(loss).expect("loss is scalar");
        let grad = g.grad(e_src).expect("e_src is differentiable");
        let grads = grad.chunks(d).map(|c| c.to_vec()).collect();
        Ok((value, grads))
    }

    /// Same graph as [`Seq2SeqModel::embedding_gradients`] but exposed for
    /// finite-difference checking.
    pub fn embedding_loss_graph(
        &self,
        src: &[u32],
        target: &[u32],
    ) -> Result<(Graph, NodeId, NodeId), ModelError> {
        self.check_src_len(src.len())?;
        let d = self.config.embed_dim;
        let embed = &self.params["embed"];
        let mut rows = Vec::with_capacity(src.len() * d);
        for &id in src {
            rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
        }
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let e_src = g.input_grad(Tensor::matrix(src.len(), d, rows));
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src.len(), target);
        Ok((g, e_src, loss))
    }

    /// Loss and the full one-hot-space gradient, one row of |V| per position
    /// (the HotFlip surface).
    pub fn onehot_gradients(
        &self,
        src: &[u32],
        target: &[u32],
    ) -> Result<(f32, Vec<Vec<f32>>), ModelError> {
        self.check_src_len(src.len())?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let v = self.config.vocab_size;
        let x = InputRepresentation::one_hot(src, v);
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let xn = g.input_grad(x.tensor());
        let e = pn.get("embed");
        let e_src = g.matmul(xn, e);
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src.len(), target);
        let value = g.value(loss).data()[0];
        g.backward(loss).expect("loss is scalar");
        let grad = g.grad(xn).expect("x is differentiable");
        let grads = grad.chunks(v).map(|c| c.to_vec()).collect();
        Ok((value, grads))
    }

    /// Loss graph with every parameter bound as a differentiable input, for
    /// training and parameter-gradient checking. Returns the graph, the node
    /// id of each parameter, and the loss node.
    pub fn trainable_loss_graph(
        &self,
        src: &[u32],
        target: &[u32],
    ) -> Result<(Graph, BTreeMap<String, NodeId>, NodeId), ModelError> {
        self.check_src_len(src.len())?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let x = InputRepresentation::one_hot(src, self.config.vocab_size);
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, true);
        let xn = g.input(x.tensor());
        let e = pn.get("embed");
        let e_src = g.matmul(xn, e);
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src.len(), target);
        Ok((g, pn.nodes, loss))
    }

    /// One-hot-input loss graph for finite-difference checking; returns the
    /// graph, the x input node and the loss node.
    pub fn onehot_loss_graph(
        &self,
        src: &[u32],
        target: &[u32],
    ) -> Result<(Graph, NodeId, NodeId), ModelError> {
        self.check_src_len(src.len())?;
        let x = InputRepresentation::one_hot(src, self.config.vocab_size);
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let xn = g.input_grad(x.tensor());
        let e = pn.get("embed");
        let e_src = g.matmul(xn, e);
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, src.len(), target);
        Ok((g, xn, loss))
    }

    /// Relaxed loss: row `r` of the input is the distribution `p` over
    /// `support`; every other row stays one-hot. Returns the loss and
    /// dL/dp over the support, in support order.
    pub fn relaxed_loss_support(
        &self,
        src: &[u32],
        r: usize,
        support: &[u32],
        p: &[f32],
        target: &[u32],
    ) -> Result<(f32, Vec<f32>), ModelError> {
        self.check_src_len(src.len())?;
        if target.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        if r >= src.len() {
            return Err(ModelError::BadInput(format!("row {r} out of {}", src.len())));
        }
        if support.is_empty() || support.len() != p.len() {
            return Err(ModelError::BadInput("support/p length mismatch".into()));
        }
        let sum: f32 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < 0.0) {
            return Err(ModelError::BadInput(format!(
                "distribution row must sum to 1 within 1e-6 (got {sum})"
            )));
        }
        let d = self.config.embed_dim;
        let n = src.len();
        let embed = &self.params["embed"];
        let gather = |ids: &[u32]| {
            let mut rows = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
            }
            rows
        };

        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let p_node = g.input_grad(Tensor::matrix(1, support.len(), p.to_vec()));
        let e_support = g.input(Tensor::matrix(support.len(), d, gather(support)));
        let e_r = g.matmul(p_node, e_support);
        let mut parts: Vec<NodeId> = Vec::new();
        if r > 0 {
            parts.push(g.input(Tensor::matrix(r, d, gather(&src[..r]))));
        }
        parts.push(e_r);
        if r + 1 < n {
            parts.push(g.input(Tensor::matrix(n - r - 1, d, gather(&src[r + 1..]))));
        }
        let e_src = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0) };
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, n, target);
        let value = g.value(loss).data()[0];
        g.backward(loss).expect("loss is scalar");
        let grad = g.grad(p_node).expect("p is differentiable").to_vec();
        Ok((value, grad))
    }

    /// Relaxed-loss graph for finite-difference checking; returns the graph,
    /// the distribution input node and the loss node.
    pub fn relaxed_loss_graph(
        &self,
        src: &[u32],
        r: usize,
        support: &[u32],
        p: &[f32],
        target: &[u32],
    ) -> Result<(Graph, NodeId, NodeId), ModelError> {
        let d = self.config.embed_dim;
        let n = src.len();
        let embed = &self.params["embed"];
        let gather = |ids: &[u32]| {
            let mut rows = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
            }
            rows
        };
        let mut g = Graph::new();
        let pn = self.bind_params(&mut g, false);
        let p_node = g.input_grad(Tensor::matrix(1, support.len(), p.to_vec()));
        let e_support = g.input(Tensor::matrix(support.len(), d, gather(support)));
        let e_r = g.matmul(p_node, e_support);
        let mut parts: Vec<NodeId> = Vec::new();
        if r > 0 {
            parts.push(g.input(Tensor::matrix(r, d, gather(&src[..r]))));
        }
        parts.push(e_r);
        if r + 1 < n {
            parts.push(g.input(Tensor::matrix(n - r - 1, d, gather(&src[r + 1..]))));
        }
        let e_src = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0) };
        let loss = self.build_loss_from_e(&mut g, &pn, e_src, n, target);
        Ok((g, p_node, loss))
    }

    /// Spec-shaped relaxed loss: `x` carries exactly one distribution row.
    /// Returns the loss and dL/dp over that row's nonzero support in token-id
    /// order.
    pub fn relaxed_loss(
        &self,
        x: &InputRepresentation,
        target: &[u32],
    ) -> Result<(f32, Vec<f32>), ModelError> {
        x.validate()?;
        let dist_rows: Vec<usize> =
            (0..x.len()).filter(|&i| !x.row_is_one_hot(i)).collect();
        if dist_rows.len() != 1 {
            return Err(ModelError::BadInput(format!(
                "expected exactly one distribution row, found {}",
                dist_rows.len()
            )));
        }
        let r = dist_rows[0];
        let mut src = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            if i == r {
                src.push(0);
            } else {
                src.push(x.row_token(i).ok_or_else(|| {
                    ModelError::BadInput(format!("row {i} is not one-hot"))
                })?);
            }
        }
        let mut support = Vec::new();
        let mut p = Vec::new();
        for (j, &v) in x.row(r).iter().enumerate() {
            if v != 0.0 {
                support.push(j as u32);
                p.push(v);
            }
        }
        self.relaxed_loss_support(&src, r, &support, &p, target)
    }

    /// Beam-search translation. Deterministic: ties by earlier beam slot.
    pub fn translate(&self, src: &[u32], beam_width: usize) -> Result<Translation, ModelError> {
        self.check_src_len(src.len())?;
        if beam_width == 0 {
            return Err(ModelError::BadInput("beam width must be >= 1".into()));
        }
        match self.config.arch {
            ArchKind::RecurrentAttention => {
                let mut session = rnn::Session::new(self, src);
                Ok(beam::beam_search(
                    &mut session,
                    beam_width,
                    self.config.max_len,
                    EOS,
                ))
            }
            ArchKind::Transformer => {
                let mut session = transformer::Session::new(self, src);
                Ok(beam::beam_search(
                    &mut session,
                    beam_width,
                    self.config.max_len,
                    EOS,
                ))
            }
        }
    }

    /// Next-token log-probabilities after feeding BOS and then `prefix`;
    /// the surface that beam search ranks over, exposed for enumeration
    /// oracles.
    pub fn decode_step_logprobs(
        &self,
        src: &[u32],
        prefix: &[u32],
    ) -> Result<Vec<f32>, ModelError> {
        self.check_src_len(src.len())?;
        match self.config.arch {
            ArchKind::RecurrentAttention => {
                let mut session = rnn::Session::new(self, src);
                let mut state = beam::StepDecoder::initial(&mut session);
                let mut lp = beam::StepDecoder::step(&mut session, &state, BOS);
                for &t in prefix {
                    state = lp.0;
                    lp = beam::StepDecoder::step(&mut session, &state, t);
                }
                Ok(lp.1)
            }
            ArchKind::Transformer => {
                let mut session = transformer::Session::new(self, src);
                let mut state = beam::StepDecoder::initial(&mut session);
                let mut lp = beam::StepDecoder::step(&mut session, &state, BOS);
                for &t in prefix {
                    state = lp.0;
                    lp = beam::StepDecoder::step(&mut session, &state, t);
                }
                Ok(lp.1)
            }
        }
    }
}

/// The surface the attack algorithms run against. Real models implement it;
/// tests substitute analytic surrogates.
pub trait AttackSurface {
    fn vocab_size(&self) -> usize;
    fn translate_src(&self, src: &[u32], beam_width: usize) -> Result<Translation, ModelError>;
    fn hard_loss(&self, src: &[u32], target: &[u32]) -> f32;
    /// Loss plus dL/d(embedding row) for every position.
    fn loss_and_embedding_grads(&self, src: &[u32], target: &[u32]) -> (f32, Vec<Vec<f32>>);
    /// Row `r` of the one-hot-space gradient dL/dx.
    fn onehot_grad_row(&self, src: &[u32], target: &[u32], r: usize) -> Vec<f32>;
    /// Relaxed loss and dL/dp over the support at position `r`.
    fn relaxed_loss_grad(
        &self,
        src: &[u32],
        r: usize,
        support: &[u32],
        p: &[f32],
        target: &[u32],
    ) -> (f32, Vec<f32>);
}

impl AttackSurface for Seq2SeqModel {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn translate_src(&self, src: &[u32], beam_width: usize) -> Result<Translation, ModelError> {
        self.translate(src, beam_width)
    }

    fn hard_loss(&self, src: &[u32], target: &[u32]) -> f32 {
        self.sentence_loss(src, target).expect("valid hard loss inputs")
    }

    fn loss_and_embedding_grads(&self, src: &[u32], target: &[u32]) -> (f32, Vec<Vec<f32>>) {
        self.embedding_gradients(src, target).expect("valid gradient inputs")
    }

    fn onehot_grad_row(&self, src: &[u32], target: &[u32], r: usize) -> Vec<f32> {
        let (_, grads) = self.onehot_gradients(src, target).expect("valid gradient inputs");
        grads[r].clone()
    }

    fn relaxed_loss_grad(
        &self,
        src: &[u32],
        r: usize,
        support: &[u32],
        p: &[f32],
        target: &[u32],
    ) -> (f32, Vec<f32>) {
        self.relaxed_loss_support(src, r, support, p, target)
            .expect("valid relaxed inputs")
    }
}

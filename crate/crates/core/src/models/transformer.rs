//! Encoder-decoder transformer built from graph primitives.
//!
//! Post-norm residual blocks, sinusoidal positional encodings, multi-head
//! scaled dot-product attention composed from matmul/transpose/softmax, and
//! a ReLU feed-forward of width `hidden_dim`. The decoder self-attention is
//! masked causally with an additive constant.

use super::beam::{log_softmax, StepDecoder};
use super::{ParamNodes, Seq2SeqModel};
use crate::numerics::{Graph, NodeId, Tensor};

fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut data = vec![0.0f32; n * d];
    for pos in 0..n {
        for i in 0..d / 2 {
            let rate = 1.0f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = pos as f64 * rate;
            data[pos * d + 2 * i] = angle.sin() as f32;
            data[pos * d + 2 * i + 1] = angle.cos() as f32;
        }
    }
    Tensor::matrix(n, d, data)
}

fn layer_norm(g: &mut Graph, pn: &ParamNodes, prefix: &str, x: NodeId) -> NodeId {
    let gamma = pn.get(&format!("{prefix}.g"));
    let beta = pn.get(&format!("{prefix}.b"));
    g.layer_norm(x, gamma, beta, 1e-5)
}

/// Multi-head attention: queries from `x_q`, keys/values from `x_kv`.
fn attention(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    prefix: &str,
    x_q: NodeId,
    x_kv: NodeId,
    causal: bool,
) -> NodeId {
    let d = model.config.embed_dim;
    let heads = model.config.heads;
    let dk = d / heads;
    let wq = pn.get(&format!("{prefix}.wq"));
    let wk = pn.get(&format!("{prefix}.wk"));
    let wv = pn.get(&format!("{prefix}.wv"));
    let wo = pn.get(&format!("{prefix}.wo"));

    let q = g.matmul(x_q, wq);
    let k = g.matmul(x_kv, wk);
    let v = g.matmul(x_kv, wv);
    let (nq, _) = g.value(q).rows_cols();
    let (nk, _) = g.value(k).rows_cols();

    let mask = if causal {
        debug_assert_eq!(nq, nk, "causal mask expects square scores");
        let mut m = vec![0.0f32; nq * nk];
        for i in 0..nq {
            for j in (i + 1)..nk {
                m[i * nk + j] = -1e9;
            }
        }
        Some(g.input(Tensor::matrix(nq, nk, m)))
    } else {
        None
    };

    let mut head_ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice(q, 1, h * dk, (h + 1) * dk);
        let kh = g.slice(k, 1, h * dk, (h + 1) * dk);
        let vh = g.slice(v, 1, h * dk, (h + 1) * dk);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scores = g.scale(scores, 1.0 / (dk as f32).sqrt());
        let scores = match mask {
            Some(m) => g.add(scores, m),
            None => scores,
        };
        let alpha = g.softmax(scores);
        head_ctx.push(g.matmul(alpha, vh));
    }
    let ctx = if head_ctx.len() == 1 { head_ctx[0] } else { g.concat(&head_ctx, 1) };
    g.matmul(ctx, wo)
}

fn feed_forward(g: &mut Graph, pn: &ParamNodes, prefix: &str, x: NodeId) -> NodeId {
    let w1 = pn.get(&format!("{prefix}.w1"));
    let b1 = pn.get(&format!("{prefix}.b1"));
    let w2 = pn.get(&format!("{prefix}.w2"));
    let b2 = pn.get(&format!("{prefix}.b2"));
    let h = g.matmul(x, w1);
    let h = g.add_row(h, b1);
    let h = g.relu(h);
    let o = g.matmul(h, w2);
    g.add_row(o, b2)
}

fn encoder_stack(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    e_src: NodeId,
    src_len: usize,
) -> NodeId {
    let d = model.config.embed_dim;
    let e = if src_len < g.value(e_src).rows_cols().0 {
        g.slice(e_src, 0, 0, src_len)
    } else {
        e_src
    };
    let pe = positional_encoding(src_len, d);
    let pe_node = g.input(pe);
    let mut x = g.add(e, pe_node);
    for l in 0..model.config.layers {
        let att = attention(model, g, pn, &format!("enc{l}.attn"), x, x, false);
        let res = g.add(x, att);
        x = layer_norm(g, pn, &format!("enc{l}.ln1"), res);
        let ff = feed_forward(g, pn, &format!("enc{l}.ff"), x);
        let res = g.add(x, ff);
        x = layer_norm(g, pn, &format!("enc{l}.ln2"), res);
    }
    x
}

fn decoder_stack(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    e_tgt: NodeId,
    enc_out: NodeId,
) -> NodeId {
    let d = model.config.embed_dim;
    let (m, _) = g.value(e_tgt).rows_cols();
    let pe = positional_encoding(m, d);
    let pe_node = g.input(pe);
    let mut x = g.add(e_tgt, pe_node);
    for l in 0..model.config.layers {
        let att = attention(model, g, pn, &format!("dec{l}.self"), x, x, true);
        let res = g.add(x, att);
        x = layer_norm(g, pn, &format!("dec{l}.ln1"), res);
        let cross = attention(model, g, pn, &format!("dec{l}.cross"), x, enc_out, false);
        let res = g.add(x, cross);
        x = layer_norm(g, pn, &format!("dec{l}.ln2"), res);
        let ff = feed_forward(g, pn, &format!("dec{l}.ff"), x);
        let res = g.add(x, ff);
        x = layer_norm(g, pn, &format!("dec{l}.ln3"), res);
    }
    x
}

pub(crate) fn build_loss(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    e_src: NodeId,
    src_len: usize,
    target: &[u32],
) -> NodeId {
    let enc_out = encoder_stack(model, g, pn, e_src, src_len);
    let e_tgt = model.target_input_embeddings(g, pn, target);
    let dec_out = decoder_stack(model, g, pn, e_tgt, enc_out);
    let out_w = pn.get("out_w");
    let out_b = pn.get("out_b");
    let logits = g.matmul(dec_out, out_w);
    let logits = g.add_row(logits, out_b);
    model.nll_from_logits(g, logits, target)
}

/// Decoding session: encoder output is cached, the decoder is re-run over
/// the growing prefix each step (no KV cache at desk scale).
pub(crate) struct Session<'m> {
    model: &'m Seq2SeqModel,
    g: Graph,
    pn: ParamNodes,
    enc_out: NodeId,
}

impl<'m> Session<'m> {
    pub(crate) fn new(model: &'m Seq2SeqModel, src: &[u32]) -> Self {
        let mut g = Graph::new();
        let pn = model.bind_params(&mut g, false);
        let d = model.config.embed_dim;
        let embed = &model.params()["embed"];
        let mut rows = Vec::with_capacity(src.len() * d);
        for &id in src {
            rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
        }
        let e_src = g.input(Tensor::matrix(src.len(), d, rows));
        let enc_out = encoder_stack(model, &mut g, &pn, e_src, src.len());
        Session { model, g, pn, enc_out }
    }
}

impl StepDecoder for Session<'_> {
    /// Decoder input tokens fed so far (BOS arrives via the first step).
    type State = Vec<u32>;

    fn initial(&mut self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&mut self, state: &Vec<u32>, prev: u32) -> (Vec<u32>, Vec<f32>) {
        let mut fed = state.clone();
        fed.push(prev);
        let d = self.model.config.embed_dim;
        let embed = &self.model.params()["embed"];
        let mut rows = Vec::with_capacity(fed.len() * d);
        for &id in &fed {
            rows.extend_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
        }
        let m = fed.len();
        let e_tgt = self.g.input(Tensor::matrix(m, d, rows));
        let dec_out = decoder_stack(self.model, &mut self.g, &self.pn, e_tgt, self.enc_out);
        let last = self.g.row(dec_out, m - 1);
        let out_w = self.pn.get("out_w");
        let out_b = self.pn.get("out_b");
        let logits = self.g.matmul(last, out_w);
        let logits = self.g.add_row(logits, out_b);
        let lp = log_softmax(self.g.value(logits).data());
        (fed, lp)
    }
}

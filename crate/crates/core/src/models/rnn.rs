//! Bidirectional GRU encoder with a multiplicative-attention GRU decoder.
//!
//! Gate equations, for input x and previous state h:
//!
//! ```text
//! z  = sigmoid(x Wz + h Uz + bz)         update gate
//! r  = sigmoid(x Wr + h Ur + br)         reset gate
//! hc = tanh(x Wh + (r * h) Uh + bh)      candidate state
//! h' = (1 - z) * h + z * hc
//! ```
//!
//! The decoder scores encoder states multiplicatively
//! (`score_j = s W_att h_j`), mixes them into a context vector and produces
//! logits from `tanh([s; c] W_comb + b_comb) W_out + b_out`.

use super::beam::{log_softmax, StepDecoder};
use super::{ParamNodes, Seq2SeqModel};
use crate::numerics::{Graph, NodeId, Tensor};

struct GruParams {
    wz: NodeId,
    uz: NodeId,
    bz: NodeId,
    wr: NodeId,
    ur: NodeId,
    br: NodeId,
    wh: NodeId,
    uh: NodeId,
    bh: NodeId,
}

fn gru_params(pn: &ParamNodes, prefix: &str) -> GruParams {
    GruParams {
        wz: pn.get(&format!("{prefix}.wz")),
        uz: pn.get(&format!("{prefix}.uz")),
        bz: pn.get(&format!("{prefix}.bz")),
        wr: pn.get(&format!("{prefix}.wr")),
        ur: pn.get(&format!("{prefix}.ur")),
        br: pn.get(&format!("{prefix}.br")),
        wh: pn.get(&format!("{prefix}.wh")),
        uh: pn.get(&format!("{prefix}.uh")),
        bh: pn.get(&format!("{prefix}.bh")),
    }
}

fn gru_step(g: &mut Graph, p: &GruParams, x: NodeId, h: NodeId, hidden: usize) -> NodeId {
    let xz = g.matmul(x, p.wz);
    let hz = g.matmul(h, p.uz);
    let z_pre = g.add(xz, hz);
    let z_pre = g.add_row(z_pre, p.bz);
    let z = g.sigmoid(z_pre);

    let xr = g.matmul(x, p.wr);
    let hr = g.matmul(h, p.ur);
    let r_pre = g.add(xr, hr);
    let r_pre = g.add_row(r_pre, p.br);
    let r = g.sigmoid(r_pre);

    let rh = g.mul(r, h);
    let xh = g.matmul(x, p.wh);
    let rhu = g.matmul(rh, p.uh);
    let hc_pre = g.add(xh, rhu);
    let hc_pre = g.add_row(hc_pre, p.bh);
    let hc = g.tanh(hc_pre);

    let ones = g.input(Tensor::matrix(1, hidden, vec![1.0; hidden]));
    let neg_z = g.scale(z, -1.0);
    let one_minus_z = g.add(ones, neg_z);
    let keep = g.mul(one_minus_z, h);
    let take = g.mul(z, hc);
    g.add(keep, take)
}

/// Encoder pass over the first `src_len` rows of `e_src`; returns the
/// encoder state matrix [src_len, 2H] and the decoder's initial state.
fn encode(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    e_src: NodeId,
    src_len: usize,
) -> (NodeId, NodeId) {
    let h = model.config.hidden_dim;
    let fwd = gru_params(pn, "enc_f");
    let bwd = gru_params(pn, "enc_b");

    let zero = g.input(Tensor::matrix(1, h, vec![0.0; h]));
    let mut hf = Vec::with_capacity(src_len);
    let mut state = zero;
    for i in 0..src_len {
        let x = g.row(e_src, i);
        state = gru_step(g, &fwd, x, state, h);
        hf.push(state);
    }
    let mut hb = vec![zero; src_len];
    state = zero;
    for i in (0..src_len).rev() {
        let x = g.row(e_src, i);
        state = gru_step(g, &bwd, x, state, h);
        hb[i] = state;
    }

    let rows: Vec<NodeId> = (0..src_len)
        .map(|i| g.concat(&[hf[i], hb[i]], 1))
        .collect();
    let enc = if rows.len() == 1 { rows[0] } else { g.concat(&rows, 0) };

    let bridge = g.concat(&[hf[src_len - 1], hb[0]], 1);
    let init_w = pn.get("init_w");
    let init_b = pn.get("init_b");
    let s0 = g.matmul(bridge, init_w);
    let s0 = g.add_row(s0, init_b);
    let s0 = g.tanh(s0);
    (enc, s0)
}

/// Decoder state update plus attention readout; returns the new state and
/// the logits row.
fn decode_step(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    enc: NodeId,
    enc_t: NodeId,
    state: NodeId,
    x: NodeId,
) -> (NodeId, NodeId) {
    let h = model.config.hidden_dim;
    let dec = gru_params(pn, "dec");
    let s = gru_step(g, &dec, x, state, h);

    let att_w = pn.get("att_w");
    let query = g.matmul(s, att_w); // [1, 2H]
    let scores = g.matmul(query, enc_t); // [1, n]
    let alpha = g.softmax(scores);
    let context = g.matmul(alpha, enc); // [1, 2H]

    let cat = g.concat(&[s, context], 1); // [1, 3H]
    let comb_w = pn.get("comb_w");
    let comb_b = pn.get("comb_b");
    let mixed = g.matmul(cat, comb_w);
    let mixed = g.add_row(mixed, comb_b);
    let mixed = g.tanh(mixed);
    let out_w = pn.get("out_w");
    let out_b = pn.get("out_b");
    let logits = g.matmul(mixed, out_w);
    let logits = g.add_row(logits, out_b);
    (s, logits)
}

pub(crate) fn build_loss(
    model: &Seq2SeqModel,
    g: &mut Graph,
    pn: &ParamNodes,
    e_src: NodeId,
    src_len: usize,
    target: &[u32],
) -> NodeId {
    let (enc, mut state) = encode(model, g, pn, e_src, src_len);
    let enc_t = g.transpose(enc);
    let e_tgt = model.target_input_embeddings(g, pn, target);
    let mut logit_rows = Vec::with_capacity(target.len());
    for i in 0..target.len() {
        let x = g.row(e_tgt, i);
        let (s, logits) = decode_step(model, g, pn, enc, enc_t, state, x);
        state = s;
        logit_rows.push(logits);
    }
    let logits = if logit_rows.len() == 1 {
        logit_rows[0]
    } else {
        g.concat(&logit_rows, 0)
    };
    model.nll_from_logits(g, logits, target)
}

/// Incremental decoding session; the graph grows as hypotheses extend.
pub(crate) struct Session<'m> {
    model: &'m Seq2SeqModel,
    g: Graph,
    pn: ParamNodes,
    enc: NodeId,
    enc_t: NodeId,
    s0: NodeId,
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
        let (enc, s0) = encode(model, &mut g, &pn, e_src, src.len());
        let enc_t = g.transpose(enc);
        Session { model, g, pn, enc, enc_t, s0 }
    }
}

impl StepDecoder for Session<'_> {
    type State = NodeId;

    fn initial(&mut self) -> NodeId {
        self.s0
    }

    fn step(&mut self, state: &NodeId, prev: u32) -> (NodeId, Vec<f32>) {
        let d = self.model.config.embed_dim;
        let embed = &self.model.params()["embed"];
        let row =
            embed.data()[prev as usize * d..(prev as usize + 1) * d].to_vec();
        let x = self.g.input(Tensor::matrix(1, d, row));
        let (s, logits) = decode_step(
            self.model,
            &mut self.g,
            &self.pn,
            self.enc,
            self.enc_t,
            *state,
            x,
        );
        let lp = log_softmax(self.g.value(logits).data());
        (s, lp)
    }
}

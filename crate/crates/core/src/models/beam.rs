//! Beam-search decoding over an incremental step function.

use serde::{Deserialize, Serialize};

/// One decoded hypothesis: emitted token ids (terminal EOS included when the
/// hypothesis ended with one), its summed log-probability, and the beam width
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub tokens: Vec<u32>,
    pub log_prob: f32,
    pub beam_width: usize,
}

/// Incremental decoder: feed the previous token, get next-token
/// log-probabilities. States are cheap handles into a session-owned graph.
pub(crate) trait StepDecoder {
    type State: Clone;
    fn initial(&mut self) -> Self::State;
    fn step(&mut self, state: &Self::State, prev: u32) -> (Self::State, Vec<f32>);
}

struct Hyp<S> {
    state: S,
    tokens: Vec<u32>,
    score: f32,
}

/// Highest-scoring completed hypothesis among those explored. A hypothesis
/// completes by emitting EOS or by reaching `max_len` tokens. Score ties are
/// broken by earlier beam slot, then lower token id, so decoding is
/// deterministic; no length normalization is applied.
pub(crate) fn beam_search<D: StepDecoder>(
    dec: &mut D,
    beam_width: usize,
    max_len: usize,
    eos: u32,
) -> Translation {
    let bos_state = dec.initial();
    let mut live: Vec<Hyp<D::State>> = vec![Hyp { state: bos_state, tokens: vec![], score: 0.0 }];
    let mut done: Vec<(Vec<u32>, f32)> = Vec::new();

    for _ in 0..max_len {
        let stepped: Vec<(D::State, Vec<f32>)> = live
            .iter()
            .map(|hyp| {
                let prev = *hyp.tokens.last().unwrap_or(&crate::tokenizer::BOS);
                dec.step(&hyp.state, prev)
            })
            .collect();
        // candidates: (score, live index, token)
        let mut cands: Vec<(f32, usize, u32)> = Vec::new();
        for (hi, (_, logp)) in stepped.iter().enumerate() {
            for (tok, lp) in logp.iter().enumerate() {
                cands.push((live[hi].score + lp, hi, tok as u32));
            }
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        cands.truncate(beam_width);

        let mut next: Vec<Hyp<D::State>> = Vec::new();
        for (score, hi, tok) in cands {
            let mut tokens = live[hi].tokens.clone();
            tokens.push(tok);
            if tok == eos {
                done.push((tokens, score));
            } else {
                next.push(Hyp { state: stepped[hi].0.clone(), tokens, score });
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
        // log-probabilities only decrease, so once the best finished
        // hypothesis beats every live one the search cannot improve
        if let Some(best_done) = done
            .iter()
            .map(|d| d.1)
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        {
            let best_live = live
                .iter()
                .map(|h| h.score)
                .fold(f32::NEG_INFINITY, f32::max);
            if best_done >= best_live {
                break;
            }
        }
    }
    // hypotheses still alive after max_len steps complete without EOS
    for h in live {
        if h.tokens.len() >= max_len {
            done.push((h.tokens, h.score));
        }
    }

    let mut best: Option<(Vec<u32>, f32)> = None;
    for (tokens, score) in done {
        match &best {
            Some((_, s)) if *s >= score => {}
            _ => best = Some((tokens, score)),
        }
    }
    let (tokens, log_prob) = best.expect("beam search explored at least one hypothesis");
    Translation { tokens, log_prob, beam_width }
}

/// Log-softmax of a logits row, for scoring decode steps.
pub(crate) fn log_softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let log_z = logits.iter().map(|v| (v - max).exp()).sum::<f32>().ln() + max;
    logits.iter().map(|v| v - log_z).collect()
}

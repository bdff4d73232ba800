//! Independent naive BLEU re-implementation compared against the metrics
//! module on random synthetic corpora.

use std::collections::BTreeMap;

use invnmt_core::metrics::corpus_bleu;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive reference: string-keyed n-gram maps, f64 throughout, written
/// directly from the BLEU definition.
fn naive_bleu(hyps: &[Vec<String>], refs: &[Vec<String>], smoothing: bool) -> f64 {
    let grams = |s: &[String], n: usize| -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        if s.len() >= n {
            for i in 0..=(s.len() - n) {
                let key = s[i..i + n].join("\u{1}");
                *m.entry(key).or_insert(0) += 1;
            }
        }
        m
    };
    let mut log_sum = 0.0f64;
    for n in 1..=4 {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (h, r) in hyps.iter().zip(refs) {
            let hg = grams(h, n);
            let rg = grams(r, n);
            for (k, c) in &hg {
                matched += (*c).min(rg.get(k).copied().unwrap_or(0));
            }
            total += h.len().saturating_sub(n - 1);
        }
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if smoothing && n > 1 {
            1.0 / (total as f64 + 1.0)
        } else {
            return 0.0;
        };
        log_sum += 0.25 * p.ln();
    }
    let hyp_len: usize = hyps.iter().map(|h| h.len()).sum();
    let ref_len: usize = refs.iter().map(|r| r.len()).sum();
    if hyp_len == 0 {
        return 0.0;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    bp * log_sum.exp() * 100.0
}

#[test]
fn matches_naive_reference_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
    for case in 0..50 {
        let n_sentences = rng.gen_range(1..8);
        let mut hyps = Vec::new();
        let mut refs = Vec::new();
        for _ in 0..n_sentences {
            let hl = rng.gen_range(1..12);
            let rl = rng.gen_range(1..12);
            hyps.push(
                (0..hl)
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect::<Vec<_>>(),
            );
            refs.push(
                (0..rl)
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect::<Vec<_>>(),
            );
        }
        for smoothing in [false, true] {
            let hyp_lines: Vec<String> = hyps.iter().map(|h| h.join(" ")).collect();
            let ref_lines: Vec<String> = refs.iter().map(|r| r.join(" ")).collect();
            let got = corpus_bleu(&hyp_lines, &ref_lines, smoothing).unwrap().value;
            let want = naive_bleu(&hyps, &refs, smoothing);
            assert!(
                (got - want).abs() < 1e-6,
                "case {case} smoothing={smoothing}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn self_bleu_is_always_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words = ["x", "y", "z", "w"];
    for _ in 0..10 {
        let lines: Vec<String> = (0..rng.gen_range(1..6))
            .map(|_| {
                (0..rng.gen_range(4..10))
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let b = corpus_bleu(&lines, &lines, false).unwrap();
        assert!((b.value - 100.0).abs() < 1e-9);
    }
}

//! Synthetic reversible-grammar parallel corpus.
//!
//! Source sentences come from a small determiner/adjective/noun/verb grammar;
//! the target side applies a fixed bijective lexicon and swaps each
//! adjective-noun pair, so the mapping is deterministic and learnable at desk
//! scale. Text is emitted in canonical form: lowercase, single-spaced, with
//! punctuation as its own token.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::training::Corpus;

const DETS: &[&str] = &["the", "a", "every", "some", "one"];
const ADJS: &[&str] = &[
    "red", "small", "old", "happy", "green", "tall", "quiet", "brave", "tired", "young",
    "quick", "heavy",
];
const NOUNS: &[&str] = &[
    "cat", "dog", "bird", "fox", "cow", "horse", "fish", "mouse", "bear", "wolf", "frog",
    "lion", "goat", "duck", "crow", "seal", "hare", "mole", "swan", "toad",
];
const VERBS: &[&str] = &[
    "sees", "likes", "finds", "hears", "follows", "greets", "watches", "helps", "calls",
    "meets",
];
const ADVS: &[&str] = &["today", "quietly", "quickly", "gladly", "often", "rarely"];

/// Deterministic bijective word mapping into the target language: reverse the
/// letters and append a vowel marker. Punctuation maps to itself.
pub fn target_word(source: &str) -> String {
    if source.chars().all(|c| c.is_ascii_punctuation()) {
        return source.to_string();
    }
    let mut out: String = source.chars().rev().collect();
    out.push('u');
    out
}

fn noun_phrase(rng: &mut ChaCha8Rng, src: &mut Vec<String>, tgt: &mut Vec<String>) {
    let det = DETS[rng.gen_range(0..DETS.len())];
    src.push(det.to_string());
    tgt.push(target_word(det));
    if rng.gen_bool(0.5) {
        let adj = ADJS[rng.gen_range(0..ADJS.len())];
        let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
        src.push(adj.to_string());
        src.push(noun.to_string());
        // adjective follows the noun in the target language
        tgt.push(target_word(noun));
        tgt.push(target_word(adj));
    } else {
        let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
        src.push(noun.to_string());
        tgt.push(target_word(noun));
    }
}

/// One aligned sentence pair.
pub fn generate_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    let mut src = Vec::new();
    let mut tgt = Vec::new();
    noun_phrase(rng, &mut src, &mut tgt);
    let verb = VERBS[rng.gen_range(0..VERBS.len())];
    src.push(verb.to_string());
    tgt.push(target_word(verb));
    noun_phrase(rng, &mut src, &mut tgt);
    if rng.gen_bool(0.3) {
        let adv = ADVS[rng.gen_range(0..ADVS.len())];
        src.push(adv.to_string());
        tgt.push(target_word(adv));
    }
    src.push(".".to_string());
    tgt.push(".".to_string());
    (src.join(" "), tgt.join(" "))
}

/// Parallel corpus with train/dev/test splits in a 90/5/5 ratio.
pub fn generate_corpus(n_pairs: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(String, String)> = (0..n_pairs).map(|_| generate_pair(&mut rng)).collect();
    let n_dev = (n_pairs / 20).max(1).min(n_pairs.saturating_sub(1));
    let n_test = n_dev.min(n_pairs.saturating_sub(n_dev + 1));
    let n_train = n_pairs - n_dev - n_test;
    Corpus {
        train: pairs[..n_train].to_vec(),
        dev: pairs[n_train..n_train + n_dev].to_vec(),
        test: pairs[n_train + n_dev..].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let a = generate_corpus(50, 7);
        let b = generate_corpus(50, 7);
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
    }

    #[test]
    fn pairs_are_aligned_and_nonempty() {
        let c = generate_corpus(100, 1);
        for (s, t) in c.train.iter().chain(&c.dev).chain(&c.test) {
            assert!(!s.is_empty() && !t.is_empty());
            assert!(s.ends_with('.') && t.ends_with('.'));
        }
    }

    #[test]
    fn lexicon_is_injective() {
        use std::collections::HashSet;
        let mut seen = HashSet::new();
        for w in DETS.iter().chain(ADJS).chain(NOUNS).chain(VERBS).chain(ADVS) {
            assert!(seen.insert(target_word(w)), "collision at {w}");
        }
    }
}

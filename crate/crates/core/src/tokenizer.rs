//! Byte-pair-encoding subword tokenization with a shared source/target
//! vocabulary, plus the vocabulary-pruning step that defines the candidate
//! set for word replacement.
//!
//! Symbols are plain strings; word boundaries live in a per-token flag on
//! [`TokenSeq`] rather than inside the symbol text, so the same subword gets
//! one id whether it starts a word or continues one. Merge rules never cross
//! word boundaries. Pair-frequency ties are broken by lexicographic order of
//! the pair so builds are deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const VOCAB_HEADER: &str = "invnmt-vocab v1";
const MERGES_HEADER: &str = "invnmt-merges v1";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no replacement candidates: pruned vocabulary is empty for this sentence")]
    NoCandidates,
    #[error("bad vocabulary/merge file: {0}")]
    BadFile(String),
}

/// Ordered BPE merge rules: replaying them on the training corpus reproduces
/// the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeTable {
    rules: Vec<(String, String)>,
}

impl MergeTable {
    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Token <-> id bijection with reserved special ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    lowercase: bool,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, lowercase: bool) -> Self {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let prev = ids.insert(t.clone(), i as u32);
            assert!(prev.is_none(), "duplicate token {t:?}");
        }
        Vocabulary { tokens, ids, lowercase }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A tokenized sentence: ids, a word-initial flag per position, and the
/// surface text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub word_start: Vec<bool>,
    pub text: String,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Surface words, grouped by the word-start flags.
    pub fn words(&self, vocab: &Vocabulary) -> Vec<String> {
        let mut words = Vec::new();
        let mut cur = String::new();
        for (i, &id) in self.ids.iter().enumerate() {
            if self.word_start[i] && !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            cur.push_str(vocab.token(id));
        }
        if !cur.is_empty() {
            words.push(cur);
        }
        words
    }
}

/// Candidate token ids for replacement in one sentence: proper words of the
/// source corpus, minus the words of the sentence itself.
#[derive(Debug, Clone)]
pub struct PrunedVocab {
    pub candidates: Vec<u32>,
    pub source_text: String,
}

impl PrunedVocab {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Split a line into words: whitespace-separated chunks, with runs of
/// punctuation split off as their own words. Lowercasing is applied first
/// when enabled.
pub fn split_words(line: &str, lowercase: bool) -> Vec<String> {
    let line = if lowercase { line.to_lowercase() } else { line.to_string() };
    let mut words = Vec::new();
    for chunk in line.split_whitespace() {
        let mut cur = String::new();
        let mut cur_is_punct = None;
        for ch in chunk.chars() {
            let is_punct = ch.is_ascii_punctuation() && ch != '\'';
            if cur_is_punct != Some(is_punct) && !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            cur_is_punct = Some(is_punct);
            cur.push(ch);
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

/// Learn a BPE merge table over the corpus (both sides of a parallel corpus
/// can be concatenated to get a shared vocabulary).
///
/// The vocabulary is the base character symbols plus one merged symbol per
/// rule, capped at `n_merges` or the number of mergeable pairs, whichever is
/// smaller. A merge that would collide with a special token string is
/// skipped.
pub fn learn_bpe(
    corpus: &[String],
    n_merges: usize,
    lowercase: bool,
) -> Result<(MergeTable, Vocabulary), TokenizerError> {
    // word type -> frequency
    let mut word_freq: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for line in corpus {
        for word in split_words(line, lowercase) {
            let symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
            if !symbols.is_empty() {
                *word_freq.entry(symbols).or_insert(0) += 1;
            }
        }
    }
    if word_freq.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut base: BTreeSet<String> = BTreeSet::new();
    for word in word_freq.keys() {
        for s in word {
            base.insert(s.clone());
        }
    }

    let mut rules: Vec<(String, String)> = Vec::new();
    let mut merged_symbols: Vec<String> = Vec::new();
    let mut words: Vec<(Vec<String>, u64)> = word_freq.into_iter().collect();
    let specials: HashSet<&str> = SPECIALS.iter().copied().collect();

    while rules.len() < n_merges {
        let mut pair_freq: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (symbols, freq) in &words {
            for w in symbols.windows(2) {
                let joined = format!("{}{}", w[0], w[1]);
                if specials.contains(joined.as_str()) {
                    continue;
                }
                *pair_freq.entry((w[0].clone(), w[1].clone())).or_insert(0) += freq;
            }
        }
        // max frequency, ties by lexicographically smallest pair; BTreeMap
        // iterates in pair order so the first maximum wins.
        let best = pair_freq
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(p, _)| p.clone());
        let Some((left, right)) = best else { break };
        let merged = format!("{left}{right}");
        for (symbols, _) in words.iter_mut() {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        rules.push((left, right));
        merged_symbols.push(merged);
    }

    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(base);
    for m in merged_symbols {
        if !tokens.contains(&m) {
            tokens.push(m);
        }
    }
    Ok((MergeTable { rules }, Vocabulary::from_tokens(tokens, lowercase)))
}

fn encode_word(word: &str, merges: &MergeTable) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    for (left, right) in &merges.rules {
        let mut i = 0;
        while i + 1 < symbols.len() {
            if &symbols[i] == left && &symbols[i + 1] == right {
                symbols[i] = format!("{left}{right}");
                symbols.remove(i + 1);
            }
            i += 1;
        }
    }
    symbols
}

/// Tokenize text by replaying the merge rules word by word. Unknown symbols
/// become UNK but keep their boundary flag.
pub fn encode(text: &str, merges: &MergeTable, vocab: &Vocabulary) -> TokenSeq {
    let mut ids = Vec::new();
    let mut word_start = Vec::new();
    for word in split_words(text, vocab.lowercase) {
        for (i, sym) in encode_word(&word, merges).into_iter().enumerate() {
            ids.push(vocab.id(&sym).unwrap_or(UNK));
            word_start.push(i == 0);
        }
    }
    TokenSeq { ids, word_start, text: text.to_string() }
}

/// Inverse of [`encode`] for in-vocabulary canonical text (single-spaced,
/// punctuation split, lowercased when the vocabulary is).
pub fn decode(seq: &TokenSeq, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (i, &id) in seq.ids.iter().enumerate() {
        if seq.word_start[i] && !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{}", vocab.token(id));
    }
    out
}

/// Unique full words of the source training corpus that exist as single
/// shared-vocabulary tokens ("proper words").
pub fn proper_words(vocab: &Vocabulary, source_corpus: &[String]) -> BTreeSet<u32> {
    let mut unique_words: HashSet<String> = HashSet::new();
    for line in source_corpus {
        for w in split_words(line, vocab.lowercase) {
            unique_words.insert(w);
        }
    }
    let mut out = BTreeSet::new();
    for w in unique_words {
        if let Some(id) = vocab.id(&w) {
            if id as usize >= SPECIALS.len() {
                out.insert(id);
            }
        }
    }
    out
}

/// Pruned candidate set for one sentence: proper words minus the words of
/// the sentence itself.
pub fn build_pruned_vocab(
    vocab: &Vocabulary,
    source_corpus: &[String],
    s_org: &TokenSeq,
) -> Result<PrunedVocab, TokenizerError> {
    let proper = proper_words(vocab, source_corpus);
    prune_with_proper(&proper, vocab, s_org)
}

/// Same as [`build_pruned_vocab`] with the proper-word set precomputed, so a
/// corpus scan is not repeated per sentence.
pub fn prune_with_proper(
    proper: &BTreeSet<u32>,
    vocab: &Vocabulary,
    s_org: &TokenSeq,
) -> Result<PrunedVocab, TokenizerError> {
    let sentence_words: HashSet<String> = s_org.words(vocab).into_iter().collect();
    let candidates: Vec<u32> = proper
        .iter()
        .copied()
        .filter(|&id| !sentence_words.contains(vocab.token(id)))
        .collect();
    if candidates.is_empty() {
        return Err(TokenizerError::NoCandidates);
    }
    Ok(PrunedVocab { candidates, source_text: s_org.text.clone() })
}

pub fn save_vocab(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{VOCAB_HEADER} lowercase={}", vocab.lowercase);
    for t in &vocab.tokens {
        let _ = writeln!(out, "{t}");
    }
    out
}

pub fn load_vocab(text: &str) -> Result<Vocabulary, TokenizerError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with(VOCAB_HEADER) {
        return Err(TokenizerError::BadFile(format!(
            "expected header {VOCAB_HEADER:?}, got {header:?}"
        )));
    }
    let lowercase = header.contains("lowercase=true");
    let tokens: Vec<String> = lines.map(|l| l.to_string()).collect();
    if tokens.len() < SPECIALS.len()
        || SPECIALS.iter().zip(&tokens).any(|(s, t)| s != t)
    {
        return Err(TokenizerError::BadFile(
            "special tokens missing or out of order".into(),
        ));
    }
    Ok(Vocabulary::from_tokens(tokens, lowercase))
}

pub fn save_merges(merges: &MergeTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MERGES_HEADER}");
    for (l, r) in &merges.rules {
        let _ = writeln!(out, "{l} {r}");
    }
    out
}

pub fn load_merges(text: &str) -> Result<MergeTable, TokenizerError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MERGES_HEADER {
        return Err(TokenizerError::BadFile(format!(
            "expected header {MERGES_HEADER:?}, got {header:?}"
        )));
    }
    let mut rules = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                rules.push((l.to_string(), r.to_string()));
            }
            _ => {
                return Err(TokenizerError::BadFile(format!(
                    "merge line {}: expected two symbols, got {line:?}",
                    i + 2
                )))
            }
        }
    }
    Ok(MergeTable { rules })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_pair_corpus() {
        let (merges, _) = learn_bpe(&lines(&["aaaa"]), 1, true).unwrap();
        assert_eq!(merges.rules(), &[("a".to_string(), "a".to_string())]);
    }

    #[test]
    fn zero_merges_gives_base_alphabet() {
        let (merges, vocab) = learn_bpe(&lines(&["abcb"]), 0, true).unwrap();
        assert!(merges.is_empty());
        // 4 specials + {a, b, c}
        assert_eq!(vocab.len(), 4 + 3);
    }

    #[test]
    fn tie_breaks_lexicographically() {
        // {"low","lowest"}: (l,o) and (o,w) both have frequency 2
        let (merges, _) = learn_bpe(&lines(&["low", "lowest"]), 1, true).unwrap();
        assert_eq!(merges.rules(), &[("l".to_string(), "o".to_string())]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            learn_bpe(&[], 5, true),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn encode_lowest_under_lo_merge() {
        let (merges, vocab) = learn_bpe(&lines(&["low", "lowest"]), 1, true).unwrap();
        let seq = encode("lowest", &merges, &vocab);
        let toks: Vec<&str> = seq.ids.iter().map(|&i| vocab.token(i)).collect();
        assert_eq!(toks, vec!["lo", "w", "e", "s", "t"]);
        assert_eq!(seq.word_start, vec![true, false, false, false, false]);
    }

    #[test]
    fn roundtrip_identity_in_vocab() {
        let corpus = lines(&["the cat sat .", "the dog sat .", "a cat ran ."]);
        let (merges, vocab) = learn_bpe(&corpus, 50, true).unwrap();
        for text in ["the cat sat .", "a dog ran .", "the cat ran ."] {
            let seq = encode(text, &merges, &vocab);
            assert_eq!(decode(&seq, &vocab), text);
        }
    }

    #[test]
    fn unknown_symbol_becomes_unk() {
        let (merges, vocab) = learn_bpe(&lines(&["abc"]), 0, true).unwrap();
        let seq = encode("axc", &merges, &vocab);
        assert_eq!(seq.ids[1], UNK);
        assert!(seq.word_start[0]);
    }

    #[test]
    fn pruned_vocab_set_identity() {
        // shared vocab {a,b,c,xx}; corpus words {a,b,c}; sentence "a b" -> {c}
        let corpus = lines(&["a b c", "xx yy"]);
        let (merges, vocab) = learn_bpe(&corpus, 10, true).unwrap();
        let source = lines(&["a b c"]);
        let s_org = encode("a b", &merges, &vocab);
        let pruned = build_pruned_vocab(&vocab, &source, &s_org).unwrap();
        let toks: Vec<&str> = pruned.candidates.iter().map(|&i| vocab.token(i)).collect();
        assert_eq!(toks, vec!["c"]);
    }

    #[test]
    fn sentence_covering_vocab_has_no_candidates() {
        let corpus = lines(&["a b"]);
        let (merges, vocab) = learn_bpe(&corpus, 10, true).unwrap();
        let s_org = encode("a b", &merges, &vocab);
        assert!(matches!(
            build_pruned_vocab(&vocab, &corpus, &s_org),
            Err(TokenizerError::NoCandidates)
        ));
    }

    #[test]
    fn pruned_vocab_matches_bruteforce_on_desk_corpus() {
        // 50-sentence corpus; compare against an independent set computation
        let mut corpus = Vec::new();
        let nouns = ["cat", "dog", "bird", "fox", "cow"];
        let verbs = ["sees", "likes", "finds", "hears"];
        let dets = ["the", "a"];
        for i in 0..50usize {
            corpus.push(format!(
                "{} {} {} {} {} .",
                dets[i % 2],
                nouns[i % 5],
                verbs[i % 4],
                dets[(i + 1) % 2],
                nouns[(i + 2) % 5]
            ));
        }
        let (merges, vocab) = learn_bpe(&corpus, 200, true).unwrap();
        let s_org = encode(&corpus[0], &merges, &vocab);
        let pruned = build_pruned_vocab(&vocab, &corpus, &s_org).unwrap();

        // independent brute force: unique corpus words that are single vocab
        // tokens, minus sentence words
        let mut uniq: BTreeSet<String> = BTreeSet::new();
        for line in &corpus {
            for w in line.split_whitespace() {
                uniq.insert(w.to_string());
            }
        }
        let sent_words: BTreeSet<String> =
            corpus[0].split_whitespace().map(|w| w.to_string()).collect();
        let expect: BTreeSet<u32> = uniq
            .iter()
            .filter(|w| !sent_words.contains(*w))
            .filter_map(|w| vocab.id(w))
            .collect();
        let got: BTreeSet<u32> = pruned.candidates.iter().copied().collect();
        assert_eq!(got, expect);
        // no candidate is a sentence word
        for &id in &pruned.candidates {
            assert!(!sent_words.contains(vocab.token(id)));
        }
    }

    #[test]
    fn vocab_and_merge_files_roundtrip() {
        let corpus = lines(&["the cat sat .", "the dog ran ."]);
        let (merges, vocab) = learn_bpe(&corpus, 20, true).unwrap();
        let v2 = load_vocab(&save_vocab(&vocab)).unwrap();
        let m2 = load_merges(&save_merges(&merges)).unwrap();
        assert_eq!(vocab, v2);
        assert_eq!(merges, m2);
    }

    #[test]
    fn bad_headers_rejected() {
        assert!(load_vocab("nonsense\n<pad>\n").is_err());
        assert!(load_merges("nonsense\n").is_err());
    }
}

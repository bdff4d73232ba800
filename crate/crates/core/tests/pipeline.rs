//! End-to-end pipeline behavior: vocabulary over the synthetic corpus,
//! memorization training, deterministic retraining, checkpoint persistence.

use invnmt_core::models::{ArchKind, ModelConfig};
use invnmt_core::synth::generate_corpus;
use invnmt_core::tokenizer::{build_pruned_vocab, decode, encode, learn_bpe};
use invnmt_core::training::{
    encode_corpus, load_checkpoint, save_checkpoint, train_model, Checkpoint, OptimizerKind,
    TrainConfig,
};

fn model_config(arch: ArchKind, vocab: usize) -> ModelConfig {
    ModelConfig {
        arch,
        vocab_size: vocab,
        embed_dim: 16,
        hidden_dim: 24,
        layers: 1,
        heads: 2,
        max_len: 24,
    }
}

#[test]
fn synthetic_corpus_roundtrips_through_bpe() {
    let corpus = generate_corpus(300, 5);
    let (merges, vocab) = learn_bpe(&corpus.both_sides(), 400, true).unwrap();
    for (s, t) in corpus.train.iter().take(40) {
        assert_eq!(decode(&encode(s, &merges, &vocab), &vocab), *s);
        assert_eq!(decode(&encode(t, &merges, &vocab), &vocab), *t);
    }
    // pruned candidates exist and exclude sentence words
    let seq = encode(&corpus.train[0].0, &merges, &vocab);
    let pruned = build_pruned_vocab(&vocab, &corpus.source_lines(), &seq).unwrap();
    assert!(!pruned.is_empty());
    let words = seq.words(&vocab);
    for &c in &pruned.candidates {
        assert!(!words.contains(&vocab.token(c).to_string()));
    }
}

#[test]
fn eight_pair_memorization_both_architectures() {
    let corpus = generate_corpus(10, 11);
    let eight = invnmt_core::training::Corpus {
        train: corpus.train[..8].to_vec(),
        dev: vec![],
        test: vec![],
    };
    let (merges, vocab) = learn_bpe(&eight.both_sides(), 200, true).unwrap();
    for arch in [ArchKind::RecurrentAttention, ArchKind::Transformer] {
        let data = encode_corpus(&eight, &merges, &vocab, 24);
        assert_eq!(data.pairs.len(), 8);
        let tc = TrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 1,
            seed: 3,
            clip_norm: 5.0,
            optimizer: OptimizerKind::Adam,
        };
        let (model, curve) = train_model(&model_config(arch, vocab.len()), &tc, &data).unwrap();
        let final_loss = curve.last().unwrap().train_loss;
        assert!(final_loss < 0.1, "{arch}: final loss {final_loss}");
        for (src, tgt) in &data.pairs {
            let greedy = model.translate(src, 1).unwrap();
            assert_eq!(&greedy.tokens, tgt, "{arch}: target not reproduced");
        }
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let corpus = generate_corpus(40, 2);
    let (merges, vocab) = learn_bpe(&corpus.both_sides(), 150, true).unwrap();
    let data = encode_corpus(&corpus, &merges, &vocab, 24);
    let tc = TrainConfig { epochs: 3, seed: 5, ..Default::default() };
    let cfg = model_config(ArchKind::RecurrentAttention, vocab.len());
    let (m1, c1) = train_model(&cfg, &tc, &data).unwrap();
    let (m2, c2) = train_model(&cfg, &tc, &data).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(m1.params(), m2.params());

    // checkpoints of identical models are byte-identical
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    save_checkpoint(&Checkpoint::of(&m1, "v", "m"), &p1).unwrap();
    save_checkpoint(&Checkpoint::of(&m2, "v", "m"), &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    // loading reproduces the model bit-exactly
    let loaded = load_checkpoint(&p1).unwrap().into_model().unwrap();
    assert_eq!(loaded.params(), m1.params());
}

//! Toy-scale neural machine translation plus invariance-based adversarial
//! attacks: replace as many source words as possible while the predicted
//! translation stays fixed.
//!
//! The pipeline: [`tokenizer`] learns a shared BPE vocabulary and the pruned
//! candidate set, [`models`] provides two differentiable seq2seq
//! architectures over [`numerics`], [`training`] fits them on desk-scale
//! corpora, [`attack`] runs gradient-guided word replacement, and [`metrics`]
//! scores the results (success rate, replacement counts, BLEU, composite
//! attack-efficiency score).

pub mod attack;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod synth;
pub mod tokenizer;
pub mod training;

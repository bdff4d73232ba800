//! Corpus ingestion, desk-scale training, and checkpoint persistence.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelConfig, Seq2SeqModel};
use crate::numerics::{Graph, Tensor};
use crate::tokenizer::{encode, MergeTable, TokenSeq, Vocabulary, EOS};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("corpus files misaligned: {src} source lines vs {tgt} target lines")]
    Misaligned { src: usize, tgt: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("checkpoint format error: {0}")]
    BadCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

/// Aligned sentence pairs split into train/dev/test.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub train: Vec<(String, String)>,
    pub dev: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

impl Corpus {
    /// All source lines followed by all target lines, for learning a shared
    /// vocabulary.
    pub fn both_sides(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for (s, t) in &self.train {
            lines.push(s.clone());
            lines.push(t.clone());
        }
        lines
    }

    pub fn source_lines(&self) -> Vec<String> {
        self.train.iter().map(|(s, _)| s.clone()).collect()
    }
}

/// Line-aligned parallel files; blank-aligned pairs are dropped and counted.
pub fn load_parallel_corpus(
    src_path: &Path,
    tgt_path: &Path,
) -> Result<(Vec<(String, String)>, usize), TrainingError> {
    let src = std::fs::read_to_string(src_path)?;
    let tgt = std::fs::read_to_string(tgt_path)?;
    let src_lines: Vec<&str> = src.lines().collect();
    let tgt_lines: Vec<&str> = tgt.lines().collect();
    if src_lines.len() != tgt_lines.len() {
        return Err(TrainingError::Misaligned {
            src: src_lines.len(),
            tgt: tgt_lines.len(),
        });
    }
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        if s.trim().is_empty() || t.trim().is_empty() {
            dropped += 1;
        } else {
            pairs.push((s.to_string(), t.to_string()));
        }
    }
    Ok((pairs, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// plain gradient descent
    Sgd,
    /// adaptive moment estimates
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f32,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            clip_norm: 5.0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Token-id training pairs; target sequences end with EOS.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub pairs: Vec<(Vec<u32>, Vec<u32>)>,
    pub dev: Vec<(Vec<u32>, Vec<u32>)>,
}

/// Encode a corpus with a shared vocabulary, dropping pairs whose source
/// exceeds `max_len` tokens.
pub fn encode_corpus(
    corpus: &Corpus,
    merges: &MergeTable,
    vocab: &Vocabulary,
    max_len: usize,
) -> TrainData {
    let enc_pair = |(s, t): &(String, String)| -> Option<(Vec<u32>, Vec<u32>)> {
        let s_seq: TokenSeq = encode(s, merges, vocab);
        let t_seq: TokenSeq = encode(t, merges, vocab);
        if s_seq.is_empty() || t_seq.is_empty() {
            return None;
        }
        if s_seq.len() > max_len || t_seq.len() + 1 > max_len {
            return None;
        }
        let mut tgt = t_seq.ids;
        tgt.push(EOS);
        Some((s_seq.ids, tgt))
    };
    TrainData {
        pairs: corpus.train.iter().filter_map(enc_pair).collect(),
        dev: corpus.dev.iter().filter_map(enc_pair).collect(),
    }
}

struct AdamState {
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
    t: u64,
}

/// Per-token mean NLL and parameter gradients for one batch. Gradients are
/// summed over pairs and scaled by 1 / total target tokens.
fn batch_grads(
    model: &Seq2SeqModel,
    batch: &[(Vec<u32>, Vec<u32>)],
) -> (f32, BTreeMap<String, Vec<f32>>) {
    let mut grads: BTreeMap<String, Vec<f32>> = model
        .params()
        .iter()
        .map(|(k, t)| (k.clone(), vec![0.0; t.numel()]))
        .collect();
    let mut loss_sum = 0.0f64;
    let mut tokens = 0usize;
    for (src, tgt) in batch {
        let mut g = Graph::new();
        let pn = model.bind_params(&mut g, true);
        let x = crate::models::InputRepresentation::one_hot(src, model.config.vocab_size);
        let xn = g.input(x.tensor());
        let e_mat = pn.get("embed");
        let e_src = g.matmul(xn, e_mat);
        let loss = model.build_loss_from_e(&mut g, &pn, e_src, src.len(), tgt);
        loss_sum += g.value(loss).data()[0] as f64;
        tokens += tgt.len();
        g.backward(loss).expect("training loss is scalar");
        for (name, _) in model.params() {
            if let Some(pg) = g.grad(pn.get(name)) {
                let acc = grads.get_mut(name).unwrap();
                for (a, v) in acc.iter_mut().zip(pg) {
                    *a += v;
                }
            }
        }
    }
    let scale = 1.0 / tokens.max(1) as f32;
    for acc in grads.values_mut() {
        for v in acc.iter_mut() {
            *v *= scale;
        }
    }
    (loss_sum as f32 * scale, grads)
}

fn eval_mean_loss(model: &Seq2SeqModel, pairs: &[(Vec<u32>, Vec<u32>)]) -> f32 {
    if pairs.is_empty() {
        return f32::NAN;
    }
    let mut loss_sum = 0.0f64;
    let mut tokens = 0usize;
    for (src, tgt) in pairs {
        loss_sum += model.sentence_loss(src, tgt).expect("eval loss") as f64;
        tokens += tgt.len();
    }
    (loss_sum / tokens as f64) as f32
}

/// One epoch entry of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f32,
    pub dev_loss: f32,
}

/// Train a fresh model on pre-encoded data. Deterministic in
/// `train_config.seed`: same seed, same curve, same parameters.
pub fn train_model(
    config: &ModelConfig,
    tc: &TrainConfig,
    data: &TrainData,
) -> Result<(Seq2SeqModel, Vec<EpochLoss>), TrainingError> {
    if data.pairs.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    let mut model = Seq2SeqModel::new(config.clone(), tc.seed)?;
    let mut adam = AdamState {
        m: model
            .params()
            .iter()
            .map(|(k, t)| (k.clone(), vec![0.0; t.numel()]))
            .collect(),
        v: model
            .params()
            .iter()
            .map(|(k, t)| (k.clone(), vec![0.0; t.numel()]))
            .collect(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..data.pairs.len()).collect();
    let mut curve = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ (epoch as u64).wrapping_mul(0x9E37));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(tc.batch_size.max(1)) {
            let batch: Vec<(Vec<u32>, Vec<u32>)> =
                chunk.iter().map(|&i| data.pairs[i].clone()).collect();
            let (loss, mut grads) = batch_grads(&model, &batch);
            if !loss.is_finite() {
                return Err(TrainingError::Diverged { epoch });
            }
            epoch_loss += loss as f64;
            batches += 1;

            // global-norm gradient clipping
            let norm: f32 = grads
                .values()
                .flat_map(|g| g.iter().map(|v| (*v as f64) * (*v as f64)))
                .sum::<f64>()
                .sqrt() as f32;
            if tc.clip_norm > 0.0 && norm > tc.clip_norm {
                let s = tc.clip_norm / norm;
                for g in grads.values_mut() {
                    for v in g.iter_mut() {
                        *v *= s;
                    }
                }
            }

            let mut params = model.params().clone();
            match tc.optimizer {
                OptimizerKind::Sgd => {
                    for (name, t) in params.iter_mut() {
                        let g = &grads[name];
                        let data = t.data_mut();
                        for (p, gv) in data.iter_mut().zip(g) {
                            *p -= tc.learning_rate * gv;
                        }
                    }
                }
                OptimizerKind::Adam => {
                    adam.t += 1;
                    let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
                    let bc1 = 1.0 - b1.powi(adam.t as i32);
                    let bc2 = 1.0 - b2.powi(adam.t as i32);
                    for (name, t) in params.iter_mut() {
                        let g = &grads[name];
                        let m = adam.m.get_mut(name).unwrap();
                        let v = adam.v.get_mut(name).unwrap();
                        let data = t.data_mut();
                        for i in 0..g.len() {
                            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                            let mh = m[i] / bc1;
                            let vh = v[i] / bc2;
                            data[i] -= tc.learning_rate * mh / (vh.sqrt() + eps);
                        }
                    }
                }
            }
            model.set_params(params);
        }
        let train_loss = (epoch_loss / batches.max(1) as f64) as f32;
        let dev_loss = eval_mean_loss(&model, &data.dev);
        curve.push(EpochLoss { epoch, train_loss, dev_loss });
    }
    Ok((model, curve))
}

pub fn loss_curve_csv(curve: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,dev_loss\n");
    for e in curve {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.dev_loss));
    }
    out
}

const CKPT_MAGIC: &str = "invnmt-ckpt";
const CKPT_VERSION: u32 = 1;

/// A trained model plus references (digests) of the vocabulary and merge
/// files it was trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
    pub vocab_digest: String,
    pub merges_digest: String,
}

impl Checkpoint {
    pub fn of(model: &Seq2SeqModel, vocab_digest: &str, merges_digest: &str) -> Self {
        Checkpoint {
            config: model.config.clone(),
            params: model.params().clone(),
            vocab_digest: vocab_digest.to_string(),
            merges_digest: merges_digest.to_string(),
        }
    }

    pub fn into_model(self) -> Result<Seq2SeqModel, TrainingError> {
        Ok(Seq2SeqModel::from_params(self.config, self.params)?)
    }
}

/// Container layout: a text header (magic, version, config and digests as
/// key/value lines, one `tensor <name> <dims>` line per array) terminated by
/// a blank line, then the raw little-endian f32 payloads in header order.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), TrainingError> {
    let mut header = String::new();
    header.push_str(&format!("{CKPT_MAGIC} v{CKPT_VERSION}\n"));
    header.push_str(&format!(
        "config={}\n",
        serde_json::to_string(&ckpt.config).expect("config serializes")
    ));
    header.push_str(&format!("vocab_digest={}\n", ckpt.vocab_digest));
    header.push_str(&format!("merges_digest={}\n", ckpt.merges_digest));
    for (name, t) in &ckpt.params {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("tensor {name} {}\n", dims.join(",")));
    }
    header.push('\n');

    let mut f = std::fs::File::create(path)?;
    f.write_all(header.as_bytes())?;
    for t in ckpt.params.values() {
        let mut bytes = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&bytes)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainingError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| TrainingError::BadCheckpoint("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| TrainingError::BadCheckpoint("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    let expected = format!("{CKPT_MAGIC} v{CKPT_VERSION}");
    if magic != expected {
        return Err(TrainingError::BadCheckpoint(format!(
            "bad magic/version: expected {expected:?}, got {magic:?}"
        )));
    }
    let mut config: Option<ModelConfig> = None;
    let mut vocab_digest = String::new();
    let mut merges_digest = String::new();
    let mut tensors: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("config=") {
            config = Some(
                serde_json::from_str(rest)
                    .map_err(|e| TrainingError::BadCheckpoint(format!("bad config: {e}")))?,
            );
        } else if let Some(rest) = line.strip_prefix("vocab_digest=") {
            vocab_digest = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("merges_digest=") {
            merges_digest = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let mut parts = rest.split(' ');
            let name = parts
                .next()
                .ok_or_else(|| TrainingError::BadCheckpoint("tensor line missing name".into()))?;
            let dims_str = parts
                .next()
                .ok_or_else(|| TrainingError::BadCheckpoint("tensor line missing dims".into()))?;
            let dims: Result<Vec<usize>, _> =
                dims_str.split(',').map(|d| d.parse::<usize>()).collect();
            let dims = dims
                .map_err(|_| TrainingError::BadCheckpoint(format!("bad dims {dims_str:?}")))?;
            tensors.push((name.to_string(), dims));
        } else {
            return Err(TrainingError::BadCheckpoint(format!(
                "unrecognized header line {line:?}"
            )));
        }
    }
    let config =
        config.ok_or_else(|| TrainingError::BadCheckpoint("missing config line".into()))?;

    let mut offset = header_end + 2;
    let mut params = BTreeMap::new();
    for (name, dims) in tensors {
        let numel: usize = dims.iter().product();
        let nbytes = numel * 4;
        if offset + nbytes > bytes.len() {
            return Err(TrainingError::BadCheckpoint(format!(
                "truncated payload for tensor {name:?}"
            )));
        }
        let mut data = Vec::with_capacity(numel);
        for chunk in bytes[offset..offset + nbytes].chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        offset += nbytes;
        let t = Tensor::new(dims, data)
            .map_err(|e| TrainingError::BadCheckpoint(format!("tensor {name:?}: {e}")))?;
        params.insert(name, t);
    }
    if offset != bytes.len() {
        return Err(TrainingError::BadCheckpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - offset
        )));
    }
    Ok(Checkpoint { config, params, vocab_digest, merges_digest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ArchKind;

    fn tiny_config(vocab: usize) -> ModelConfig {
        ModelConfig {
            arch: ArchKind::RecurrentAttention,
            vocab_size: vocab,
            embed_dim: 8,
            hidden_dim: 8,
            layers: 1,
            heads: 1,
            max_len: 12,
        }
    }

    #[test]
    fn load_parallel_counts_and_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("s.txt");
        let tp = dir.path().join("t.txt");
        std::fs::write(&sp, "a\n\nb\nc\n").unwrap();
        std::fs::write(&tp, "x\ny\n\nz\n").unwrap();
        let (pairs, dropped) = load_parallel_corpus(&sp, &tp).unwrap();
        assert_eq!(pairs.len(), 2); // lines 1 and 4
        assert_eq!(dropped, 2);

        std::fs::write(&tp, "x\ny\n").unwrap();
        match load_parallel_corpus(&sp, &tp) {
            Err(TrainingError::Misaligned { src: 4, tgt: 2 }) => {}
            other => panic!("expected misalignment, got {other:?}"),
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let data = TrainData {
            pairs: vec![(vec![4, 5], vec![5, 4, EOS]), (vec![5, 4], vec![4, 5, EOS])],
            dev: vec![],
        };
        let tc = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            seed: 1,
            clip_norm: 5.0,
            optimizer: OptimizerKind::Sgd,
        };
        let (_, curve) = train_model(&tiny_config(6), &tc, &data).unwrap();
        assert!(curve.windows(2).all(|w| w[0].train_loss == w[1].train_loss));
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let data = TrainData {
            pairs: vec![(vec![4, 5], vec![5, 4, EOS]), (vec![5, 4], vec![4, 5, EOS])],
            dev: vec![(vec![4, 4], vec![4, 4, EOS])],
        };
        let tc = TrainConfig { epochs: 4, batch_size: 1, seed: 9, ..Default::default() };
        let (m1, c1) = train_model(&tiny_config(6), &tc, &data).unwrap();
        let (m2, c2) = train_model(&tiny_config(6), &tc, &data).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let model = Seq2SeqModel::new(tiny_config(6), 3).unwrap();
        let ckpt = Checkpoint::of(&model, "vd", "md");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.params, ckpt.params);
        assert_eq!(loaded.vocab_digest, "vd");
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let model = Seq2SeqModel::new(tiny_config(6), 3).unwrap();
        let ckpt = Checkpoint::of(&model, "vd", "md");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TrainingError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn future_version_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"invnmt-ckpt v99\n\n").unwrap();
        match load_checkpoint(&path) {
            Err(TrainingError::BadCheckpoint(msg)) => {
                assert!(msg.contains("v1") && msg.contains("v99"), "{msg}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }
}

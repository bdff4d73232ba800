//! `invnmt train`: corpus in, checkpoint + vocabulary + loss curve out.

use std::path::{Path, PathBuf};

use clap::Args;
use invnmt_core::models::{ArchKind, ModelConfig};
use invnmt_core::synth::generate_corpus;
use invnmt_core::tokenizer::{learn_bpe, save_merges, save_vocab};
use invnmt_core::training::{
    encode_corpus, load_parallel_corpus, loss_curve_csv, save_checkpoint, train_model,
    Checkpoint, Corpus, OptimizerKind, TrainConfig,
};

use crate::manifest::ManifestBuilder;
use crate::{sha256_hex, write_file, CliError};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Generate a synthetic parallel corpus with this many pairs instead of
    /// reading files
    #[arg(long)]
    pub synth: Option<usize>,
    #[arg(long)]
    pub train_src: Option<PathBuf>,
    #[arg(long)]
    pub train_tgt: Option<PathBuf>,
    #[arg(long)]
    pub dev_src: Option<PathBuf>,
    #[arg(long)]
    pub dev_tgt: Option<PathBuf>,

    /// recurrent-attention (rnn) or transformer
    #[arg(long, default_value = "recurrent-attention")]
    pub arch: String,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,

    /// BPE merge operations for the shared vocabulary
    #[arg(long, default_value_t = 2000)]
    pub merges: usize,
    /// Keep corpus casing instead of lowercasing
    #[arg(long, default_value_t = false)]
    pub keep_case: bool,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f32,
    /// adam or sgd
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let corpus = load_corpus(args)?;
    if corpus.train.is_empty() {
        return Err(CliError::Input("training corpus is empty".into()));
    }
    if args.synth.is_some() {
        // persist the generated corpus so attacks can reference it
        for (name, pairs) in [
            ("train", &corpus.train),
            ("dev", &corpus.dev),
            ("test", &corpus.test),
        ] {
            let src: String = pairs.iter().map(|(s, _)| format!("{s}\n")).collect();
            let tgt: String = pairs.iter().map(|(_, t)| format!("{t}\n")).collect();
            write_file(&args.out_dir.join(format!("{name}.src")), src.as_bytes())?;
            write_file(&args.out_dir.join(format!("{name}.tgt")), tgt.as_bytes())?;
        }
    }

    let (merges, vocab) = learn_bpe(&corpus.both_sides(), args.merges, !args.keep_case)
        .map_err(|e| CliError::Input(format!("BPE learning failed: {e}")))?;

    let arch: ArchKind = args
        .arch
        .parse()
        .map_err(|e: String| CliError::Input(e))?;
    let model_config = ModelConfig {
        arch,
        vocab_size: vocab.len(),
        embed_dim: args.embed_dim,
        hidden_dim: args.hidden_dim,
        layers: args.layers,
        heads: args.heads,
        max_len: args.max_len,
    };
    let optimizer = match args.optimizer.as_str() {
        "adam" => OptimizerKind::Adam,
        "sgd" => OptimizerKind::Sgd,
        other => return Err(CliError::Input(format!("unknown optimizer {other:?}"))),
    };
    let train_config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        clip_norm: args.clip_norm,
        optimizer,
    };

    let data = encode_corpus(&corpus, &merges, &vocab, args.max_len);
    if data.pairs.is_empty() {
        return Err(CliError::Input(
            "no training pairs survived encoding (max_len too small?)".into(),
        ));
    }
    let (model, curve) = train_model(&model_config, &train_config, &data)
        .map_err(|e| CliError::Runtime(format!("training failed: {e}")))?;

    let vocab_text = save_vocab(&vocab);
    let merges_text = save_merges(&merges);
    let vocab_digest = sha256_hex(vocab_text.as_bytes());
    let merges_digest = sha256_hex(merges_text.as_bytes());

    let dir = &args.out_dir;
    let vocab_path = dir.join("vocab.txt");
    let merges_path = dir.join("merges.txt");
    let ckpt_path = dir.join("model.ckpt");
    let curve_path = dir.join("loss_curve.csv");
    write_file(&vocab_path, vocab_text.as_bytes())?;
    write_file(&merges_path, merges_text.as_bytes())?;
    write_file(&curve_path, loss_curve_csv(&curve).as_bytes())?;
    save_checkpoint(&Checkpoint::of(&model, &vocab_digest, &merges_digest), &ckpt_path)
        .map_err(|e| CliError::Runtime(format!("checkpoint write failed: {e}")))?;

    let config_digest = sha256_hex(
        serde_json::to_string(&(&model_config, &train_config))
            .expect("config serializes")
            .as_bytes(),
    );
    let mut manifest = ManifestBuilder::new("train", args.seed, &config_digest);
    for p in [&args.train_src, &args.train_tgt, &args.dev_src, &args.dev_tgt]
        .into_iter()
        .flatten()
    {
        if let Ok(bytes) = std::fs::read(p) {
            manifest.input(p, &bytes);
        }
    }
    for p in [&vocab_path, &merges_path, &ckpt_path, &curve_path] {
        manifest.output(p);
    }
    manifest.write(dir)?;

    let final_loss = curve.last().map(|e| e.train_loss).unwrap_or(f32::NAN);
    println!(
        "trained {} ({} params tensors, vocab {}) to train loss {:.4}; wrote {}",
        arch,
        model.params().len(),
        vocab.len(),
        final_loss,
        ckpt_path.display()
    );
    Ok(())
}

fn load_corpus(args: &TrainArgs) -> Result<Corpus, CliError> {
    if let Some(n) = args.synth {
        return Ok(generate_corpus(n, args.seed));
    }
    let (Some(src), Some(tgt)) = (&args.train_src, &args.train_tgt) else {
        return Err(CliError::Input(
            "either --synth N or both --train-src and --train-tgt are required".into(),
        ));
    };
    let (train, dropped) = load_pairs(src, tgt)?;
    if dropped > 0 {
        eprintln!("note: dropped {dropped} blank-aligned training pairs");
    }
    let dev = match (&args.dev_src, &args.dev_tgt) {
        (Some(ds), Some(dt)) => load_pairs(ds, dt)?.0,
        _ => Vec::new(),
    };
    Ok(Corpus { train, dev, test: Vec::new() })
}

fn load_pairs(src: &Path, tgt: &Path) -> Result<(Vec<(String, String)>, usize), CliError> {
    load_parallel_corpus(src, tgt).map_err(|e| CliError::Input(format!("{e}")))
}

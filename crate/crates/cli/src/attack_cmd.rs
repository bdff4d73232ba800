//! `invnmt attack`: run one attack method over a sentence file, emitting one
//! JSONL record per sentence plus a trailing summary line.

use std::path::PathBuf;

use clap::Args;
use invnmt_core::attack::{
    finish_result, run_attack, AttackConfig, AttackError, AttackRecord, LossMode,
    ReplacementKind, SoftAttUpdate, Traversal,
};
use invnmt_core::tokenizer::{encode, prune_with_proper, proper_words};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::translate_cmd::load_model_bundle;
use crate::{parse_kv_config, read_file, write_file, CliError};

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub merges: PathBuf,
    /// sentences to attack, one per line
    #[arg(long)]
    pub sentences: PathBuf,
    /// source-side training corpus defining the proper-word candidate set
    #[arg(long)]
    pub source_corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,

    /// traversal+replacement shorthand: min-grad+soft-att, random+soft-att,
    /// min-grad+hotflip, random+hotflip
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub traversal: Option<String>,
    #[arg(long)]
    pub replacement: Option<String>,

    /// optional key=value config file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_sweep: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub max_prob: Option<f32>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f32>,
    #[arg(long)]
    pub l_min_init: Option<f32>,
    /// hard | relaxed
    #[arg(long)]
    pub loss_mode: Option<String>,
    /// softmax | simplex-projection
    #[arg(long)]
    pub soft_att_update: Option<String>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// judge success on detokenized text instead of token ids
    #[arg(long, default_value_t = false)]
    pub success_on_text: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// attack a random sample of this many sentences
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// worker threads; overrides the INVNMT_WORKERS environment variable
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct Summary {
    total: usize,
    attacked: usize,
    skipped: usize,
    success_rate: f64,
    nor_mean: f64,
    nor_median: f64,
}

#[derive(Serialize)]
struct SummaryLine {
    summary: Summary,
}

fn parse_traversal(s: &str) -> Result<Traversal, CliError> {
    match s {
        "min-grad" => Ok(Traversal::MinGrad),
        "random" => Ok(Traversal::Random),
        other => Err(CliError::Input(format!("unknown traversal {other:?}"))),
    }
}

fn parse_replacement(s: &str) -> Result<ReplacementKind, CliError> {
    match s {
        "soft-att" => Ok(ReplacementKind::SoftAtt),
        "hotflip" => Ok(ReplacementKind::HotFlip),
        other => Err(CliError::Input(format!("unknown replacement {other:?}"))),
    }
}

/// Assemble the attack configuration: defaults, then config file, then flags.
pub fn build_config(args: &AttackArgs) -> Result<AttackConfig, CliError> {
    let mut cfg = AttackConfig::default();
    if let Some(path) = &args.config {
        let file = parse_kv_config(&read_file(path)?)?;
        for (k, v) in &file {
            apply_kv(&mut cfg, k, v)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        }
    }
    if let Some(m) = &args.method {
        let (t, r) = m.split_once('+').ok_or_else(|| {
            CliError::Input(format!(
                "method {m:?} should look like min-grad+soft-att"
            ))
        })?;
        cfg.traversal = parse_traversal(t)?;
        cfg.replacement = parse_replacement(r)?;
    }
    if let Some(t) = &args.traversal {
        cfg.traversal = parse_traversal(t)?;
    }
    if let Some(r) = &args.replacement {
        cfg.replacement = parse_replacement(r)?;
    }
    if let Some(v) = args.max_sweep {
        cfg.max_sweep = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = args.max_prob {
        cfg.max_prob = v;
    }
    if let Some(v) = args.n_iter {
        cfg.n_iter = v;
    }
    if let Some(v) = args.step_size {
        cfg.step_size = v;
    }
    if let Some(v) = args.l_min_init {
        cfg.l_min_init = v;
    }
    if let Some(v) = &args.loss_mode {
        cfg.loss_mode = match v.as_str() {
            "hard" => LossMode::Hard,
            "relaxed" => LossMode::Relaxed,
            other => return Err(CliError::Input(format!("unknown loss mode {other:?}"))),
        };
    }
    if let Some(v) = &args.soft_att_update {
        cfg.soft_att_update = match v.as_str() {
            "softmax" => SoftAttUpdate::Softmax,
            "simplex-projection" => SoftAttUpdate::SimplexProjection,
            other => return Err(CliError::Input(format!("unknown update mode {other:?}"))),
        };
    }
    if let Some(v) = args.beam_width {
        cfg.beam_width = v;
    }
    cfg.success_on_text = args.success_on_text;
    cfg.seed = args.seed;
    cfg.validate()
        .map_err(|e| CliError::Input(format!("invalid attack config: {e}")))?;
    Ok(cfg)
}

fn apply_kv(cfg: &mut AttackConfig, key: &str, value: &str) -> Result<(), String> {
    let bad = |e: std::num::ParseIntError| format!("{key}: {e}");
    let badf = |e: std::num::ParseFloatError| format!("{key}: {e}");
    match key {
        "max_sweep" => cfg.max_sweep = value.parse().map_err(bad)?,
        "max_iter" => cfg.max_iter = value.parse().map_err(bad)?,
        "max_prob" => cfg.max_prob = value.parse().map_err(badf)?,
        "n_iter" => cfg.n_iter = value.parse().map_err(bad)?,
        "step_size" => cfg.step_size = value.parse().map_err(badf)?,
        "l_min_init" => cfg.l_min_init = value.parse().map_err(badf)?,
        "beam_width" => cfg.beam_width = value.parse().map_err(bad)?,
        "seed" => cfg.seed = value.parse().map_err(bad)?,
        "traversal" => {
            cfg.traversal = match value {
                "min-grad" => Traversal::MinGrad,
                "random" => Traversal::Random,
                _ => return Err(format!("unknown traversal {value:?}")),
            }
        }
        "replacement" => {
            cfg.replacement = match value {
                "soft-att" => ReplacementKind::SoftAtt,
                "hotflip" => ReplacementKind::HotFlip,
                _ => return Err(format!("unknown replacement {value:?}")),
            }
        }
        "loss_mode" => {
            cfg.loss_mode = match value {
                "hard" => LossMode::Hard,
                "relaxed" => LossMode::Relaxed,
                _ => return Err(format!("unknown loss mode {value:?}")),
            }
        }
        "soft_att_update" => {
            cfg.soft_att_update = match value {
                "softmax" => SoftAttUpdate::Softmax,
                "simplex-projection" => SoftAttUpdate::SimplexProjection,
                _ => return Err(format!("unknown update mode {value:?}")),
            }
        }
        "success_on_text" => {
            cfg.success_on_text = value.parse().map_err(|e| format!("{key}: {e}"))?
        }
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}

/// Stable per-sentence seed derived from the base seed and the sentence's
/// position in the input file.
pub fn sentence_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The attack loop over a sentence list; returns JSONL lines (records in
/// input order, then one summary line).
pub fn attack_lines(
    model: &invnmt_core::models::Seq2SeqModel,
    vocab: &invnmt_core::tokenizer::Vocabulary,
    merges: &invnmt_core::tokenizer::MergeTable,
    source_corpus: &[String],
    sentences: &[(usize, String)],
    cfg: &AttackConfig,
    workers: usize,
) -> Result<Vec<String>, CliError> {
    let proper = proper_words(vocab, source_corpus);
    let digest = cfg.digest();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;

    let records: Vec<AttackRecord> = pool.install(|| {
        sentences
            .par_iter()
            .map(|(index, line)| {
                let seed = sentence_seed(cfg.seed, *index);
                let mut cfg_i = cfg.clone();
                cfg_i.seed = seed;
                let seq = encode(line, merges, vocab);
                let skip = |reason: &str| AttackRecord {
                    src: line.clone(),
                    adv_src: line.clone(),
                    pred: String::new(),
                    adv_pred: String::new(),
                    success: false,
                    replacements: vec![],
                    nor: 0.0,
                    config_digest: digest.clone(),
                    seed,
                    flags: vec![reason.to_string()],
                };
                if seq.is_empty() || seq.len() > model.config.max_len {
                    return skip("skipped_too_long");
                }
                let prune = match prune_with_proper(&proper, vocab, &seq) {
                    Ok(p) => p,
                    Err(_) => return skip("skipped_no_candidates"),
                };
                match run_attack(model, &seq.ids, &prune, &cfg_i) {
                    Ok(raw) => {
                        let result = finish_result(&raw, vocab, &seq, &cfg_i);
                        AttackRecord::from_result(&result, &digest, seed)
                    }
                    Err(AttackError::Model(e)) => skip(&format!("skipped_model_error:{e}")),
                    Err(e) => skip(&format!("skipped:{e}")),
                }
            })
            .collect()
    });

    let attacked: Vec<&AttackRecord> = records
        .iter()
        .filter(|r| !r.flags.iter().any(|f| f.starts_with("skipped")))
        .collect();
    let skipped = records.len() - attacked.len();
    let (success_rate, nor_mean, nor_median) = if attacked.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let owned: Vec<AttackRecord> = attacked.iter().map(|r| (*r).clone()).collect();
        let sr = invnmt_core::metrics::success_rate(&owned).unwrap_or(0.0);
        let (m, md) = invnmt_core::metrics::nor_stats(&owned).unwrap_or((0.0, 0.0));
        (sr, m, md)
    };

    let mut lines = Vec::with_capacity(records.len() + 1);
    for r in &records {
        lines.push(
            serde_json::to_string(r)
                .map_err(|e| CliError::Runtime(format!("record serialization: {e}")))?,
        );
    }
    lines.push(
        serde_json::to_string(&SummaryLine {
            summary: Summary {
                total: records.len(),
                attacked: attacked.len(),
                skipped,
                success_rate,
                nor_mean,
                nor_median,
            },
        })
        .map_err(|e| CliError::Runtime(format!("summary serialization: {e}")))?,
    );
    Ok(lines)
}

pub fn run(args: &AttackArgs) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    let (model, vocab, merges) = load_model_bundle(&args.checkpoint, &args.vocab, &args.merges)?;
    let sentences_text = read_file(&args.sentences)?;
    let corpus_text = read_file(&args.source_corpus)?;
    let source_corpus: Vec<String> = corpus_text.lines().map(|l| l.to_string()).collect();

    let mut sentences: Vec<(usize, String)> = sentences_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i, l.to_string()))
        .collect();
    if let Some(n) = args.sample_size {
        if n < sentences.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sentences.shuffle(&mut rng);
            sentences.truncate(n);
            sentences.sort_by_key(|(i, _)| *i);
        }
    }

    let workers = args
        .workers
        .or_else(|| {
            std::env::var("INVNMT_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(2);

    let lines = attack_lines(&model, &vocab, &merges, &source_corpus, &sentences, &cfg, workers)?;
    let body = lines.join("\n") + "\n";
    write_file(&args.out, body.as_bytes())?;

    let mut manifest = ManifestBuilder::new("attack", cfg.seed, &cfg.digest());
    for p in [&args.checkpoint, &args.vocab, &args.merges, &args.sentences, &args.source_corpus]
    {
        if let Ok(bytes) = std::fs::read(p) {
            manifest.input(p, &bytes);
        }
    }
    manifest.output(&args.out);
    if let Some(dir) = args.out.parent() {
        manifest.write(dir)?;
    }
    // echo the summary line for interactive runs
    if let Some(last) = lines.last() {
        println!("{last}");
    }
    Ok(())
}

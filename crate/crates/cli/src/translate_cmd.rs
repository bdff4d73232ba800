//! `invnmt translate`: decode sentences with a trained checkpoint.

use std::path::PathBuf;

use clap::Args;

use crate::{read_file, write_file, CliError};

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub merges: PathBuf,
    /// one sentence per line
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// write translations here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Load a checkpoint plus its tokenizer files, verifying the digests the
/// checkpoint recorded.
pub fn load_model_bundle(
    checkpoint: &std::path::Path,
    vocab_path: &std::path::Path,
    merges_path: &std::path::Path,
) -> Result<
    (
        invnmt_core::models::Seq2SeqModel,
        invnmt_core::tokenizer::Vocabulary,
        invnmt_core::tokenizer::MergeTable,
    ),
    CliError,
> {
    let vocab_text = read_file(vocab_path)?;
    let merges_text = read_file(merges_path)?;
    let vocab = invnmt_core::tokenizer::load_vocab(&vocab_text)
        .map_err(|e| CliError::Input(format!("{}: {e}", vocab_path.display())))?;
    let merges = invnmt_core::tokenizer::load_merges(&merges_text)
        .map_err(|e| CliError::Input(format!("{}: {e}", merges_path.display())))?;
    let ckpt = invnmt_core::training::load_checkpoint(checkpoint)
        .map_err(|e| CliError::Input(format!("{}: {e}", checkpoint.display())))?;
    let vocab_digest = crate::sha256_hex(vocab_text.as_bytes());
    let merges_digest = crate::sha256_hex(merges_text.as_bytes());
    if ckpt.vocab_digest != vocab_digest {
        return Err(CliError::Input(format!(
            "vocabulary file does not match checkpoint (digest {} vs recorded {})",
            &vocab_digest[..12],
            &ckpt.vocab_digest[..12.min(ckpt.vocab_digest.len())]
        )));
    }
    if ckpt.merges_digest != merges_digest {
        return Err(CliError::Input(
            "merge file does not match checkpoint digest".into(),
        ));
    }
    let model = ckpt
        .into_model()
        .map_err(|e| CliError::Input(format!("checkpoint is not loadable: {e}")))?;
    Ok((model, vocab, merges))
}

pub fn run(args: &TranslateArgs) -> Result<(), CliError> {
    let (model, vocab, merges) = load_model_bundle(&args.checkpoint, &args.vocab, &args.merges)?;
    let input = read_file(&args.input)?;
    let mut lines_out = String::new();
    for line in input.lines() {
        if line.trim().is_empty() {
            lines_out.push('\n');
            continue;
        }
        let seq = invnmt_core::tokenizer::encode(line, &merges, &vocab);
        let text = match model.translate(&seq.ids, args.beam) {
            Ok(t) => {
                let words: Vec<&str> = t
                    .tokens
                    .iter()
                    .filter(|&&id| id != invnmt_core::tokenizer::EOS)
                    .map(|&id| vocab.token(id))
                    .collect();
                words.join(" ")
            }
            Err(e) => return Err(CliError::Runtime(format!("translate failed: {e}"))),
        };
        lines_out.push_str(&text);
        lines_out.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, lines_out.as_bytes())?,
        None => print!("{lines_out}"),
    }
    Ok(())
}

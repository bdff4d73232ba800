//! `invnmt report`: success-rate/NOR tables and the composite-score table,
//! from attack results plus an optional model fleet, or from a fixture file
//! of published BLEU numbers.

use std::path::{Path, PathBuf};

use clap::Args;
use invnmt_core::attack::AttackRecord;
use invnmt_core::metrics::{
    bleu_matrix_with, composite_score, nor_stats, render_csv, render_markdown, success_rate,
    EvalReport,
};
use invnmt_core::tokenizer::encode;

use crate::manifest::ManifestBuilder;
use crate::translate_cmd::load_model_bundle;
use crate::{read_file, sha256_hex, write_file, CliError};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// attack result files (JSONL), comma separated
    #[arg(long, value_delimiter = ',')]
    pub results: Vec<PathBuf>,
    /// method labels matching --results; defaults to file stems
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// label for the attacked model column
    #[arg(long, default_value = "model")]
    pub model_label: String,

    /// fleet checkpoints, attacked model first
    #[arg(long, value_delimiter = ',')]
    pub fleet: Vec<PathBuf>,
    /// vocabulary per fleet model (one value broadcasts)
    #[arg(long, value_delimiter = ',')]
    pub fleet_vocabs: Vec<PathBuf>,
    /// merge table per fleet model (one value broadcasts)
    #[arg(long, value_delimiter = ',')]
    pub fleet_merges: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// disable add-one BLEU smoothing
    #[arg(long, default_value_t = false)]
    pub no_smoothing: bool,

    /// reproduce the composite-score table from a fixture CSV of published
    /// BLEU rows instead of model runs
    #[arg(long)]
    pub paper_fixture: Option<PathBuf>,

    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parse a JSONL results file: per-sentence records, ignoring the summary
/// line and skipped sentences.
pub fn parse_results(path: &Path) -> Result<Vec<AttackRecord>, CliError> {
    let text = read_file(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
            CliError::Input(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        if value.get("summary").is_some() {
            continue;
        }
        let record: AttackRecord = serde_json::from_value(value).map_err(|e| {
            CliError::Input(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        if !record.flags.iter().any(|f| f.starts_with("skipped")) {
            records.push(record);
        }
    }
    if records.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no usable attack records",
            path.display()
        )));
    }
    Ok(records)
}

fn fixture_reports(path: &Path) -> Result<(Vec<EvalReport>, String), CliError> {
    let text = read_file(path)?;
    let mut reports = Vec::new();
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l)
        .ok_or_else(|| CliError::Input(format!("{}: empty fixture", path.display())))?;
    let expected = "model,lang,method,b_src,b_l1,b_l2,b_l3,b_l4,e_m_published";
    if header.trim() != expected {
        return Err(CliError::Input(format!(
            "{}: fixture header must be {expected:?}",
            path.display()
        )));
    }
    let mut check_lines = String::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(CliError::Input(format!(
                "{} line {}: expected 9 columns",
                path.display(),
                i + 1
            )));
        }
        let num = |j: usize| -> Result<f64, CliError> {
            cols[j].trim().parse().map_err(|e| {
                CliError::Input(format!("{} line {}: column {}: {e}", path.display(), i + 1, j + 1))
            })
        };
        let (b_src, b_l1) = (num(3)?, num(4)?);
        let others = [num(5)?, num(6)?, num(7)?];
        let published = num(8)?;
        let e = composite_score(b_src, b_l1, &others)
            .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?;
        check_lines.push_str(&format!(
            "{} {} {}: computed {:.3} published {:.2} (diff {:+.4})\n",
            cols[0],
            cols[1],
            cols[2],
            e,
            published,
            e - published
        ));
        reports.push(EvalReport {
            method: format!("{} ({})", cols[2], cols[1]),
            model: cols[0].to_string(),
            success_rate: f64::NAN,
            nor_mean: f64::NAN,
            nor_median: f64::NAN,
            b_src,
            b_models: vec![b_l1, others[0], others[1], others[2]],
            e_m: e,
            excluded: 0,
        });
    }
    Ok((reports, check_lines))
}

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    if let Some(fixture) = &args.paper_fixture {
        let (reports, check) = fixture_reports(fixture)?;
        let md = render_markdown(&reports);
        let csv = render_csv(&reports);
        write_file(&args.out_dir.join("report.md"), md.as_bytes())?;
        write_file(&args.out_dir.join("report.csv"), csv.as_bytes())?;
        write_file(&args.out_dir.join("fixture_check.txt"), check.as_bytes())?;
        let mut manifest = ManifestBuilder::new("report", 0, &sha256_hex(check.as_bytes()));
        if let Ok(bytes) = std::fs::read(fixture) {
            manifest.input(fixture, &bytes);
        }
        manifest.output(&args.out_dir.join("report.md"));
        manifest.output(&args.out_dir.join("report.csv"));
        manifest.write(&args.out_dir)?;
        print!("{check}");
        return Ok(());
    }

    if args.results.is_empty() {
        return Err(CliError::Input(
            "either --results or --paper-fixture is required".into(),
        ));
    }

    // optional fleet for the BLEU matrix
    let mut fleet = Vec::new();
    if !args.fleet.is_empty() {
        let broadcast = |list: &Vec<PathBuf>, i: usize| -> Result<PathBuf, CliError> {
            match (list.len(), list.first()) {
                (1, Some(only)) => Ok(only.clone()),
                (n, _) if n == args.fleet.len() => Ok(list[i].clone()),
                _ => Err(CliError::Input(
                    "--fleet-vocabs/--fleet-merges must have 1 entry or one per fleet model"
                        .into(),
                )),
            }
        };
        for (i, ckpt) in args.fleet.iter().enumerate() {
            let vocab = broadcast(&args.fleet_vocabs, i)?;
            let merges = broadcast(&args.fleet_merges, i)?;
            fleet.push(load_model_bundle(ckpt, &vocab, &merges)?);
        }
    }

    let mut reports = Vec::new();
    for (i, path) in args.results.iter().enumerate() {
        let records = parse_results(path)?;
        let label = args
            .labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("method{i}"))
            });
        let sr = success_rate(&records)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let (nor_mean, nor_median) = nor_stats(&records)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

        let (b_src, b_models, e_m, excluded) = if fleet.is_empty() {
            (f64::NAN, Vec::new(), f64::NAN, 0)
        } else {
            let pairs: Vec<(String, String)> = records
                .iter()
                .map(|r| (r.src.clone(), r.adv_src.clone()))
                .collect();
            let matrix = bleu_matrix_with(
                &pairs,
                fleet.len(),
                |m, sentence| {
                    let (model, vocab, merges) = &fleet[m];
                    let seq = encode(sentence, merges, vocab);
                    if seq.is_empty() || seq.len() > model.config.max_len {
                        return None;
                    }
                    model.translate(&seq.ids, args.beam).ok().map(|t| {
                        t.tokens
                            .iter()
                            .filter(|&&id| id != invnmt_core::tokenizer::EOS)
                            .map(|&id| vocab.token(id))
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                },
                !args.no_smoothing,
            )
            .map_err(|e| CliError::Runtime(format!("BLEU matrix: {e}")))?;
            let b_models: Vec<f64> = matrix.b_models.iter().map(|b| b.value).collect();
            let e = composite_score(matrix.b_src.value, b_models[0], &b_models[1..])
                .map_err(|e| CliError::Runtime(format!("composite score: {e}")))?;
            (matrix.b_src.value, b_models, e, matrix.excluded)
        };

        reports.push(EvalReport {
            method: label,
            model: args.model_label.clone(),
            success_rate: sr,
            nor_mean,
            nor_median,
            b_src,
            b_models,
            e_m,
            excluded,
        });
    }

    let md = render_markdown(&reports);
    let csv = render_csv(&reports);
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| CliError::Runtime(format!("report serialization: {e}")))?;
    write_file(&args.out_dir.join("report.md"), md.as_bytes())?;
    write_file(&args.out_dir.join("report.csv"), csv.as_bytes())?;
    write_file(&args.out_dir.join("report.json"), json.as_bytes())?;

    let mut manifest = ManifestBuilder::new("report", 0, &sha256_hex(csv.as_bytes()));
    for p in &args.results {
        if let Ok(bytes) = std::fs::read(p) {
            manifest.input(p, &bytes);
        }
    }
    for name in ["report.md", "report.csv", "report.json"] {
        manifest.output(&args.out_dir.join(name));
    }
    manifest.write(&args.out_dir)?;
    print!("{md}");
    Ok(())
}

//! Evaluation: corpus BLEU, success rate, replacement-count statistics, the
//! cross-model BLEU matrix and the composite attack-efficiency score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {hyps} hypotheses vs {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("BLEU value {0} outside [0, 100]")]
    OutOfRange(f64),
}

/// Corpus-level 4-gram BLEU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub value: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub smoothed: bool,
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Standard corpus BLEU with brevity penalty and uniform quarter weights,
/// over whitespace-tokenized text. With `smoothing`, a higher-order
/// precision whose clipped match count is zero is replaced by
/// `(matches + 1) / (total + 1)`; unigram precision is never smoothed, so an
/// entirely disjoint corpus still scores zero.
pub fn corpus_bleu(
    hypotheses: &[String],
    references: &[String],
    smoothing: bool,
) -> Result<BleuScore, MetricsError> {
    if hypotheses.is_empty() || references.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hyps: hypotheses.len(),
            refs: references.len(),
        });
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, rf) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = rf.split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            for (gram, count) in &hc {
                let clip = rc.get(gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(&clip);
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }

    let mut precisions = [0.0f64; 4];
    let mut zero = false;
    for n in 0..4 {
        let (m, t) = (matches[n], totals[n]);
        precisions[n] = if m > 0 {
            m as f64 / t as f64
        } else if smoothing && n > 0 {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        } else {
            zero = true;
            0.0
        };
    }

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let value = if zero || hyp_len == 0 {
        0.0
    } else {
        let log_mean: f64 = precisions.iter().map(|p| 0.25 * p.ln()).sum();
        brevity_penalty * log_mean.exp() * 100.0
    };
    Ok(BleuScore { value, precisions, brevity_penalty, smoothed: smoothing })
}

/// Percentage of attacked sentences whose adversarial translation equals the
/// original.
pub fn success_rate(results: &[AttackRecord]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let wins = results.iter().filter(|r| r.success).count();
    Ok(100.0 * wins as f64 / results.len() as f64)
}

/// Mean and median of the normalized number of replacements.
pub fn nor_stats(results: &[AttackRecord]) -> Result<(f64, f64), MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut nors: Vec<f64> = results.iter().map(|r| r.nor as f64).collect();
    let mean = nors.iter().sum::<f64>() / nors.len() as f64;
    nors.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = nors.len() / 2;
    let median = if nors.len() % 2 == 1 {
        nors[mid]
    } else {
        0.5 * (nors[mid - 1] + nors[mid])
    };
    Ok((mean, median))
}

/// Source-side and per-model BLEU between original and adversarial versions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuMatrix {
    pub b_src: BleuScore,
    /// attacked model first, then the rest of the fleet in caller order
    pub b_models: Vec<BleuScore>,
    /// sentence pairs dropped because some model could not translate them
    pub excluded: usize,
}

/// Compute the BLEU matrix for original/adversarial source pairs over a
/// fleet of `n_models` translators. `translate(model, sentence)` returns
/// `None` for untranslatable input (for example length overflow); such pairs
/// are excluded from every cell and counted.
pub fn bleu_matrix_with<F>(
    pairs: &[(String, String)],
    n_models: usize,
    mut translate: F,
    smoothing: bool,
) -> Result<BleuMatrix, MetricsError>
where
    F: FnMut(usize, &str) -> Option<String>,
{
    if pairs.is_empty() || n_models == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut orig_src = Vec::new();
    let mut adv_src = Vec::new();
    let mut orig_trans: Vec<Vec<String>> = vec![Vec::new(); n_models];
    let mut adv_trans: Vec<Vec<String>> = vec![Vec::new(); n_models];
    let mut excluded = 0usize;

    'pairs: for (orig, adv) in pairs {
        let mut o_row = Vec::with_capacity(n_models);
        let mut a_row = Vec::with_capacity(n_models);
        for m in 0..n_models {
            match (translate(m, orig), translate(m, adv)) {
                (Some(o), Some(a)) => {
                    o_row.push(o);
                    a_row.push(a);
                }
                _ => {
                    excluded += 1;
                    continue 'pairs;
                }
            }
        }
        orig_src.push(orig.clone());
        adv_src.push(adv.clone());
        for m in 0..n_models {
            orig_trans[m].push(o_row[m].clone());
            adv_trans[m].push(a_row[m].clone());
        }
    }
    if orig_src.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let b_src = corpus_bleu(&adv_src, &orig_src, smoothing)?;
    let mut b_models = Vec::with_capacity(n_models);
    for m in 0..n_models {
        b_models.push(corpus_bleu(&adv_trans[m], &orig_trans[m], smoothing)?);
    }
    Ok(BleuMatrix { b_src, b_models, excluded })
}

/// Composite attack-efficiency score over a fleet:
/// `(b_src + (100 - b_attacked) + sum(b_others)) / (n + 1)` with `n` the
/// fleet size. Lower is a better attack.
pub fn composite_score(
    b_src: f64,
    b_attacked: f64,
    b_others: &[f64],
) -> Result<f64, MetricsError> {
    for &v in [b_src, b_attacked].iter().chain(b_others) {
        if !(0.0..=100.0).contains(&v) {
            return Err(MetricsError::OutOfRange(v));
        }
    }
    let n = 1 + b_others.len();
    let sum = b_src + (100.0 - b_attacked) + b_others.iter().sum::<f64>();
    Ok(sum / (n as f64 + 1.0))
}

/// One evaluated method on one attacked model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub model: String,
    pub success_rate: f64,
    pub nor_mean: f64,
    pub nor_median: f64,
    pub b_src: f64,
    /// attacked model first
    pub b_models: Vec<f64>,
    pub e_m: f64,
    pub excluded: usize,
}

impl EvalReport {
    /// Recompute the composite score from the stored BLEU fields.
    pub fn recompute_e(&self) -> Result<f64, MetricsError> {
        composite_score(self.b_src, self.b_models[0], &self.b_models[1..])
    }
}

/// Success-rate / NOR table plus composite-score table, as markdown.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str("| model | method | success rate (%) | NOR mean | NOR median |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {:.1} | {:.2} | {:.2} |\n",
            r.model, r.method, r.success_rate, r.nor_mean, r.nor_median
        ));
    }
    out.push('\n');
    out.push_str("| model | method | b_src |");
    let max_models = reports.iter().map(|r| r.b_models.len()).max().unwrap_or(0);
    for i in 0..max_models {
        out.push_str(&format!(" b_l{} |", i + 1));
    }
    out.push_str(" e(M) |\n|---|---|---|");
    for _ in 0..max_models {
        out.push_str("---|");
    }
    out.push_str("---|\n");
    for r in reports {
        out.push_str(&format!("| {} | {} | {:.2} |", r.model, r.method, r.b_src));
        for i in 0..max_models {
            match r.b_models.get(i) {
                Some(b) => out.push_str(&format!(" {b:.2} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push_str(&format!(" {:.2} |\n", r.e_m));
    }
    out
}

pub fn render_csv(reports: &[EvalReport]) -> String {
    let max_models = reports.iter().map(|r| r.b_models.len()).max().unwrap_or(0);
    let mut out = String::from("model,method,success_rate,nor_mean,nor_median,b_src");
    for i in 0..max_models {
        out.push_str(&format!(",b_l{}", i + 1));
    }
    out.push_str(",e_m,excluded\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.model, r.method, r.success_rate, r.nor_mean, r.nor_median, r.b_src
        ));
        for i in 0..max_models {
            match r.b_models.get(i) {
                Some(b) => out.push_str(&format!(",{b}")),
                None => out.push(','),
            }
        }
        out.push_str(&format!(",{},{}\n", r.e_m, r.excluded));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(success: bool, nor: f32) -> AttackRecord {
        AttackRecord {
            src: String::new(),
            adv_src: String::new(),
            pred: String::new(),
            adv_pred: String::new(),
            success,
            replacements: vec![],
            nor,
            config_digest: String::new(),
            seed: 0,
            flags: vec![],
        }
    }

    #[test]
    fn identical_corpus_scores_100() {
        let refs = vec!["the cat sat down".to_string(), "a dog ran".to_string()];
        let b = corpus_bleu(&refs, &refs, false).unwrap();
        assert!((b.value - 100.0).abs() < 1e-9);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_repetition_scores_zero_unsmoothed() {
        let hyp = vec!["the the the the".to_string()];
        let rf = vec!["the cat sat down".to_string()];
        let b = corpus_bleu(&hyp, &rf, false).unwrap();
        assert_eq!(b.value, 0.0);
        assert!((b.precisions[0] - 0.25).abs() < 1e-12);
        assert_eq!(b.precisions[1], 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = vec!["x".to_string()];
        let b = vec!["x".to_string(), "y".to_string()];
        assert!(matches!(
            corpus_bleu(&a, &b, false),
            Err(MetricsError::LengthMismatch { hyps: 1, refs: 2 })
        ));
    }

    #[test]
    fn success_rate_thirds() {
        let rs: Vec<AttackRecord> =
            [true, true, true, false, false].iter().map(|&s| record(s, 0.1)).collect();
        assert!((success_rate(&rs).unwrap() - 60.0).abs() < 1e-12);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn nor_mean_and_median() {
        let rs: Vec<AttackRecord> =
            [0.2f32, 0.4, 0.9].iter().map(|&n| record(true, n)).collect();
        let (mean, median) = nor_stats(&rs).unwrap();
        assert!((mean - 0.5).abs() < 1e-6);
        assert!((median - 0.4).abs() < 1e-6);

        let one = vec![record(true, 0.2)];
        let (m, md) = nor_stats(&one).unwrap();
        assert!((m - 0.2).abs() < 1e-6 && (md - 0.2).abs() < 1e-6);
    }

    #[test]
    fn composite_score_paper_rows() {
        // published table rows for the min-grad + soft-att attacks
        let e1 = composite_score(14.49, 89.86, &[19.74, 18.51, 21.98]).unwrap();
        assert!((e1 - 16.97).abs() <= 0.005, "got {e1}");
        let e2 = composite_score(31.17, 88.55, &[31.09, 20.63, 27.43]).unwrap();
        assert!((e2 - 24.35).abs() <= 0.005, "got {e2}");
        // a perfect attack scores zero
        let e3 = composite_score(0.0, 100.0, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e3, 0.0);
    }

    #[test]
    fn composite_score_is_monotone() {
        let base = composite_score(20.0, 80.0, &[30.0, 40.0]).unwrap();
        assert!(composite_score(20.0, 81.0, &[30.0, 40.0]).unwrap() < base);
        assert!(composite_score(21.0, 80.0, &[30.0, 40.0]).unwrap() > base);
        assert!(composite_score(20.0, 80.0, &[31.0, 40.0]).unwrap() > base);
    }

    #[test]
    fn composite_score_rejects_out_of_range() {
        assert!(composite_score(101.0, 50.0, &[]).is_err());
        assert!(composite_score(50.0, -0.1, &[]).is_err());
    }

    #[test]
    fn bleu_matrix_identity_pairs() {
        let pairs: Vec<(String, String)> = vec![
            ("the cat sat".into(), "the cat sat".into()),
            ("a dog ran".into(), "a dog ran".into()),
        ];
        let m = bleu_matrix_with(&pairs, 2, |_, s| Some(format!("T {s}")), true).unwrap();
        assert!((m.b_src.value - 100.0).abs() < 1e-9);
        for b in &m.b_models {
            assert!((b.value - 100.0).abs() < 1e-9);
        }
        assert_eq!(m.excluded, 0);
    }

    #[test]
    fn bleu_matrix_counts_exclusions() {
        let pairs: Vec<(String, String)> = vec![
            ("short one".into(), "short one".into()),
            ("way too long sentence".into(), "way too long sentence".into()),
        ];
        let m = bleu_matrix_with(
            &pairs,
            1,
            |_, s| if s.len() > 12 { None } else { Some(s.to_string()) },
            true,
        )
        .unwrap();
        assert_eq!(m.excluded, 1);
    }
}

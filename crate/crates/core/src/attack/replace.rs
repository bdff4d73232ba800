//! Word replacement: soft-att descent over the pruned vocabulary, and the
//! first-order hotflip baseline.

use super::{AttackConfig, AttackError, LossMode, SoftAttUpdate};
use crate::models::AttackSurface;
use crate::tokenizer::PrunedVocab;

/// Soft-attention word replacement at position `r`.
///
/// The one-hot row is relaxed to a distribution `p`, initialized uniform
/// over the pruned candidates and zero elsewhere. Only the candidate
/// components move, by gradient descent on the relaxed loss. The loop exits
/// when `max_iter` iterations elapse or one word has held probability above
/// `max_prob` for `n_iter` consecutive iterations; a word losing the argmax
/// resets its streak. Returns the argmax word and, depending on
/// `cfg.loss_mode`, either the exact loss of the hard-substituted sentence
/// or the relaxed loss from the final iteration (computed before that
/// iteration's update, as the descent loop sees it).
pub fn soft_att_replace<M: AttackSurface + ?Sized>(
    model: &M,
    s: &[u32],
    t_org: &[u32],
    r: usize,
    prune: &PrunedVocab,
    cfg: &AttackConfig,
) -> Result<(u32, f32), AttackError> {
    if prune.is_empty() {
        return Err(AttackError::NoCandidates);
    }
    let support = &prune.candidates;
    let k = support.len();
    if k == 1 {
        let word = support[0];
        let mut flipped = s.to_vec();
        flipped[r] = word;
        return Ok((word, model.hard_loss(&flipped, t_org)));
    }

    // p parameterized as softmax of free scores (or projected directly)
    let mut scores = vec![0.0f32; k];
    let mut p = vec![1.0 / k as f32; k];
    let mut counts = vec![0usize; k];
    let mut last_loss = f32::INFINITY;
    let mut arg = 0usize;

    for _ in 0..cfg.max_iter {
        let (loss, grad_p) = model.relaxed_loss_grad(s, r, support, &p, t_org);
        last_loss = loss;
        match cfg.soft_att_update {
            SoftAttUpdate::Softmax => {
                // chain rule through the softmax parameterization
                let inner: f32 = p.iter().zip(&grad_p).map(|(pi, gi)| pi * gi).sum();
                for i in 0..k {
                    scores[i] -= cfg.step_size * p[i] * (grad_p[i] - inner);
                }
                softmax_into(&scores, &mut p);
            }
            SoftAttUpdate::SimplexProjection => {
                for i in 0..k {
                    p[i] -= cfg.step_size * grad_p[i];
                }
                project_simplex(&mut p);
            }
        }
        let (p_max, ind_word) = argmax(&p);
        arg = ind_word;
        for (i, c) in counts.iter_mut().enumerate() {
            if i != ind_word {
                *c = 0;
            }
        }
        if p_max > cfg.max_prob {
            counts[ind_word] += 1;
            if counts[ind_word] == cfg.n_iter {
                break;
            }
        } else {
            counts[ind_word] = 0;
        }
    }

    let word = support[arg];
    let loss = match cfg.loss_mode {
        LossMode::Hard => {
            let mut flipped = s.to_vec();
            flipped[r] = word;
            model.hard_loss(&flipped, t_org)
        }
        LossMode::Relaxed => last_loss,
    };
    Ok((word, loss))
}

/// HotFlip word replacement at position `r`: score every candidate by the
/// first-order loss change `g[r][j] - g[r][current]` in one-hot space and
/// take the minimizer (invariance wants the loss low). The returned loss is
/// the exact hard loss of the flipped sentence.
pub fn hotflip_replace<M: AttackSurface + ?Sized>(
    model: &M,
    s: &[u32],
    t_org: &[u32],
    r: usize,
    prune: &PrunedVocab,
) -> Result<(u32, f32), AttackError> {
    if prune.is_empty() {
        return Err(AttackError::NoCandidates);
    }
    let g_row = model.onehot_grad_row(s, t_org, r);
    let current = g_row[s[r] as usize];
    let mut best: Option<(f32, u32)> = None;
    for &cand in &prune.candidates {
        let score = g_row[cand as usize] - current;
        match best {
            Some((bs, _)) if bs <= score => {}
            _ => best = Some((score, cand)),
        }
    }
    let (_, word) = best.expect("prune is nonempty");
    let mut flipped = s.to_vec();
    flipped[r] = word;
    Ok((word, model.hard_loss(&flipped, t_org)))
}

fn softmax_into(scores: &[f32], p: &mut [f32]) {
    let max = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for (pi, si) in p.iter_mut().zip(scores) {
        *pi = (si - max).exp();
        sum += *pi;
    }
    for pi in p.iter_mut() {
        *pi /= sum;
    }
}

fn argmax(p: &[f32]) -> (f32, usize) {
    let mut best = (f32::NEG_INFINITY, 0usize);
    for (i, &v) in p.iter().enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// Euclidean projection onto the probability simplex (Duchi et al. 2008).
fn project_simplex(p: &mut [f32]) {
    let k = p.len();
    let mut sorted: Vec<f32> = p.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0f32;
    let mut rho = 0usize;
    let mut rho_sum = 0.0f32;
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if v - (cumsum - 1.0) / (j as f32 + 1.0) > 0.0 {
            rho = j + 1;
            rho_sum = cumsum;
        }
    }
    let theta = (rho_sum - 1.0) / rho.max(1) as f32;
    for v in p.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
    // renormalize away projection rounding so downstream sum checks hold
    let s: f32 = p.iter().sum();
    if s > 0.0 {
        for v in p.iter_mut() {
            *v /= s;
        }
    } else {
        for v in p.iter_mut() {
            *v = 1.0 / k as f32;
        }
    }
}

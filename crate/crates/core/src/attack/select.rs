//! Position-index traversal: min-grad and the random baseline.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::AttackError;
use crate::models::AttackSurface;

/// The unvisited position whose embedding gradient has the smallest l2 norm,
/// computed on the current sentence; ties go to the lowest index. Also
/// returns the sentence loss from the same forward pass.
pub(crate) fn min_grad_with_loss<M: AttackSurface + ?Sized>(
    model: &M,
    s: &[u32],
    t_org: &[u32],
    ind_vis: &BTreeSet<usize>,
) -> Result<(f32, usize), AttackError> {
    if ind_vis.len() >= s.len() {
        return Err(AttackError::AllVisited);
    }
    let (loss, grads) = model.loss_and_embedding_grads(s, t_org);
    let mut best: Option<(f32, usize)> = None;
    for (i, g) in grads.iter().enumerate() {
        if ind_vis.contains(&i) {
            continue;
        }
        let norm = g.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt() as f32;
        match best {
            Some((bn, _)) if bn <= norm => {}
            _ => best = Some((norm, i)),
        }
    }
    let (_, r) = best.expect("at least one unvisited position");
    Ok((loss, r))
}

/// Position selection by minimum embedding-gradient norm.
pub fn min_grad_position<M: AttackSurface + ?Sized>(
    model: &M,
    s: &[u32],
    t_org: &[u32],
    ind_vis: &BTreeSet<usize>,
) -> Result<usize, AttackError> {
    min_grad_with_loss(model, s, t_org, ind_vis).map(|(_, r)| r)
}

/// Uniform draw over unvisited positions; deterministic under a seeded rng.
pub fn random_position(
    n: usize,
    ind_vis: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<usize, AttackError> {
    let unvisited: Vec<usize> = (0..n).filter(|i| !ind_vis.contains(i)).collect();
    if unvisited.is_empty() {
        return Err(AttackError::AllVisited);
    }
    Ok(unvisited[rng.gen_range(0..unvisited.len())])
}

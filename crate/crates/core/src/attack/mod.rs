//! Invariance attack: position-index traversal (min-grad or random), word
//! replacement (soft-att or hotflip), and the sweep driver that applies
//! replacements under the min-loss acceptance criteria.

mod replace;
mod select;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::models::{AttackSurface, ModelError, Translation};
use crate::tokenizer::{decode, PrunedVocab, TokenSeq, Vocabulary};

pub use replace::{hotflip_replace, soft_att_replace};
pub use select::{min_grad_position, random_position};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("no replacement candidates for this sentence")]
    NoCandidates,
    #[error("all positions already visited")]
    AllVisited,
    #[error("empty source sentence")]
    EmptySource,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Traversal {
    MinGrad,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementKind {
    SoftAtt,
    HotFlip,
}

/// How the loss reported by soft-att is obtained: `Hard` re-evaluates the
/// discrete sentence with the chosen word substituted; `Relaxed` returns the
/// last relaxed-input loss the descent loop computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    Hard,
    Relaxed,
}

/// How soft-att keeps its distribution on the simplex: free scores through a
/// softmax, or explicit Euclidean projection after each descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftAttUpdate {
    Softmax,
    SimplexProjection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub max_sweep: usize,
    pub max_iter: usize,
    pub max_prob: f32,
    pub n_iter: usize,
    pub step_size: f32,
    pub l_min_init: f32,
    pub traversal: Traversal,
    pub replacement: ReplacementKind,
    pub loss_mode: LossMode,
    pub soft_att_update: SoftAttUpdate,
    pub beam_width: usize,
    pub success_on_text: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_sweep: 5,
            max_iter: 1000,
            max_prob: 0.9,
            n_iter: 10,
            step_size: 0.1,
            l_min_init: 100.0,
            traversal: Traversal::MinGrad,
            replacement: ReplacementKind::SoftAtt,
            loss_mode: LossMode::Hard,
            soft_att_update: SoftAttUpdate::Softmax,
            beam_width: 5,
            success_on_text: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.max_prob > 0.0 && self.max_prob < 1.0) {
            return Err(AttackError::Model(ModelError::BadInput(format!(
                "max_prob must lie in (0,1), got {}",
                self.max_prob
            ))));
        }
        if self.max_iter == 0 || self.n_iter == 0 || self.beam_width == 0 {
            return Err(AttackError::Model(ModelError::BadInput(
                "max_iter, n_iter and beam_width must be positive".into(),
            )));
        }
        Ok(())
    }

    /// Stable digest of the configuration (canonical JSON, fixed field order).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_string(&h.finalize())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Which acceptance branch fired for a replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptRule {
    /// position replaced before: candidate loss beat the current sentence loss
    Revisit,
    /// first replacement at this position: candidate loss beat the running minimum
    FirstVisit,
}

/// One accepted replacement. `loss_before` is the threshold the acceptance
/// rule compared against (current-sentence loss for revisits, the running
/// minimum for first visits), so `loss_after < loss_before` re-validates the
/// logged predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub position: usize,
    pub old: String,
    pub new: String,
    pub old_id: u32,
    pub new_id: u32,
    pub loss_before: f32,
    pub loss_after: f32,
    pub sweep: usize,
    pub rule: AcceptRule,
}

/// Token-level attack outcome, before detokenization.
#[derive(Debug, Clone)]
pub struct RawAttack {
    pub s_org: Vec<u32>,
    pub s_adv: Vec<u32>,
    pub t_org: Translation,
    pub t_adv: Translation,
    pub l_org: f32,
    pub replacements: Vec<RawReplacement>,
    pub sweeps_run: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawReplacement {
    pub position: usize,
    pub old_id: u32,
    pub new_id: u32,
    pub loss_before: f32,
    pub loss_after: f32,
    pub sweep: usize,
    pub rule: AcceptRule,
}

/// Detokenized attack result, ready for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResult {
    pub src: String,
    pub adv_src: String,
    pub pred: String,
    pub adv_pred: String,
    pub success: bool,
    pub replacements: Vec<Replacement>,
    pub nor: f32,
    pub flags: Vec<String>,
    pub src_ids: Vec<u32>,
    pub adv_src_ids: Vec<u32>,
    pub pred_ids: Vec<u32>,
    pub adv_pred_ids: Vec<u32>,
}

/// Run the sweep-based multiple-replacement attack on one tokenized sentence.
///
/// The original translation is fixed once, then up to `max_sweep` sweeps
/// visit every position in traversal order. A replacement at a previously
/// replaced position must beat the current sentence loss; a first replacement
/// must beat the running minimum, which starts at `l_min_init` and is capped
/// below at the original loss after every acceptance. The attack stops early
/// after a sweep with no replacement.
pub fn run_attack<M: AttackSurface + ?Sized>(
    model: &M,
    s_org: &[u32],
    prune: &PrunedVocab,
    cfg: &AttackConfig,
) -> Result<RawAttack, AttackError> {
    cfg.validate()?;
    if s_org.is_empty() {
        return Err(AttackError::EmptySource);
    }
    if prune.is_empty() {
        return Err(AttackError::NoCandidates);
    }
    let n = s_org.len();
    let t_org = model.translate_src(s_org, cfg.beam_width)?;
    let l_org = model.hard_loss(s_org, &t_org.tokens);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut s = s_org.to_vec();
    let mut l_min = cfg.l_min_init;
    let mut replaced: BTreeSet<usize> = BTreeSet::new();
    let mut log: Vec<RawReplacement> = Vec::new();
    let mut flags: Vec<String> = Vec::new();
    let mut sweeps_run = 0usize;

    if cfg.max_sweep == 0 {
        flags.push("degenerate_no_sweeps".to_string());
    }

    for sweep in 0..cfg.max_sweep {
        sweeps_run = sweep + 1;
        let mut changed = false;
        let mut visited: BTreeSet<usize> = BTreeSet::new();
        while visited.len() < n {
            let (l, r) = match cfg.traversal {
                Traversal::MinGrad => {
                    select::min_grad_with_loss(model, &s, &t_org.tokens, &visited)?
                }
                Traversal::Random => {
                    let r = random_position(n, &visited, &mut rng)?;
                    (model.hard_loss(&s, &t_org.tokens), r)
                }
            };
            visited.insert(r);
            let (word, loss) = match cfg.replacement {
                ReplacementKind::SoftAtt => {
                    soft_att_replace(model, &s, &t_org.tokens, r, prune, cfg)?
                }
                ReplacementKind::HotFlip => {
                    hotflip_replace(model, &s, &t_org.tokens, r, prune)?
                }
            };
            if replaced.contains(&r) {
                if loss < l {
                    l_min = loss.max(l_org);
                    log.push(RawReplacement {
                        position: r,
                        old_id: s[r],
                        new_id: word,
                        loss_before: l,
                        loss_after: loss,
                        sweep,
                        rule: AcceptRule::Revisit,
                    });
                    s[r] = word;
                    changed = true;
                }
            } else if loss < l_min {
                let threshold = l_min;
                replaced.insert(r);
                l_min = loss.max(l_org);
                log.push(RawReplacement {
                    position: r,
                    old_id: s[r],
                    new_id: word,
                    loss_before: threshold,
                    loss_after: loss,
                    sweep,
                    rule: AcceptRule::FirstVisit,
                });
                s[r] = word;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    if log.is_empty() && cfg.max_sweep > 0 {
        // the l_min initialization promises one replacement only when some
        // candidate loss falls below it; flag runs where none did
        flags.push("no_candidate_below_l_min_init".to_string());
    }

    let t_adv = model.translate_src(&s, cfg.beam_width)?;
    Ok(RawAttack {
        s_org: s_org.to_vec(),
        s_adv: s,
        t_org,
        t_adv,
        l_org,
        replacements: log,
        sweeps_run,
        flags,
    })
}

/// Detokenize a raw attack into an [`AttackResult`]. Success means the
/// adversarial translation equals the original exactly: token ids by
/// default, detokenized text when `success_on_text` is set.
pub fn finish_result(
    raw: &RawAttack,
    vocab: &Vocabulary,
    s_org_seq: &TokenSeq,
    cfg: &AttackConfig,
) -> AttackResult {
    let adv_seq = TokenSeq {
        ids: raw.s_adv.clone(),
        word_start: s_org_seq.word_start.clone(),
        text: String::new(),
    };
    let pred_text = decode_target(&raw.t_org.tokens, vocab);
    let adv_pred_text = decode_target(&raw.t_adv.tokens, vocab);
    let success = if cfg.success_on_text {
        pred_text == adv_pred_text
    } else {
        raw.t_org.tokens == raw.t_adv.tokens
    };
    let distinct: BTreeSet<usize> = raw.replacements.iter().map(|r| r.position).collect();
    let nor = distinct.len() as f32 / raw.s_org.len() as f32;
    AttackResult {
        src: decode(s_org_seq, vocab),
        adv_src: decode(&adv_seq, vocab),
        pred: pred_text,
        adv_pred: adv_pred_text,
        success,
        replacements: raw
            .replacements
            .iter()
            .map(|r| Replacement {
                position: r.position,
                old: vocab.token(r.old_id).to_string(),
                new: vocab.token(r.new_id).to_string(),
                old_id: r.old_id,
                new_id: r.new_id,
                loss_before: r.loss_before,
                loss_after: r.loss_after,
                sweep: r.sweep,
                rule: r.rule,
            })
            .collect(),
        nor,
        flags: raw.flags.clone(),
        src_ids: raw.s_org.clone(),
        adv_src_ids: raw.s_adv.clone(),
        pred_ids: raw.t_org.tokens.clone(),
        adv_pred_ids: raw.t_adv.tokens.clone(),
    }
}

/// Target-side detokenization: strip the terminal EOS, then decode with every
/// token starting a word unless it continues the previous one in the
/// original sequence — target tokens carry no boundary flags, so each token
/// is printed as its own word.
fn decode_target(tokens: &[u32], vocab: &Vocabulary) -> String {
    let stripped: Vec<u32> = tokens
        .iter()
        .copied()
        .filter(|&t| t != crate::tokenizer::EOS)
        .collect();
    stripped
        .iter()
        .map(|&t| vocab.token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One JSONL record per attacked sentence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub src: String,
    pub adv_src: String,
    pub pred: String,
    pub adv_pred: String,
    pub success: bool,
    pub replacements: Vec<Replacement>,
    pub nor: f32,
    pub config_digest: String,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl AttackRecord {
    pub fn from_result(result: &AttackResult, config_digest: &str, seed: u64) -> Self {
        AttackRecord {
            src: result.src.clone(),
            adv_src: result.adv_src.clone(),
            pred: result.pred.clone(),
            adv_pred: result.adv_pred.clone(),
            success: result.success,
            replacements: result.replacements.clone(),
            nor: result.nor,
            config_digest: config_digest.to_string(),
            seed,
            flags: result.flags.clone(),
        }
    }
}

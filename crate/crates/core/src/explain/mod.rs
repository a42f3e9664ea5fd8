//! EDU-level attribution: attention-derived node importance, hypothesis-aware
//! interaction, leaf scoring and extraction of explanation sets.

use std::collections::BTreeSet;

use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::interchange::{Document, Explanation};
use crate::model::heads::{affine, LOG_FLOOR};
use crate::model::{AttentionRecord, BoundParams, InteractionMode};

/// `I` as an `n × 1` column: head-averaged incoming attention mass of each node,
/// i.e. the sum of `β` over edges where the node is the attended neighbor.
pub fn node_importance(tape: &mut Tape, records: &[AttentionRecord], nodes: usize, heads: usize) -> Result<Var> {
    let mut total: Option<Var> = None;
    for rec in records {
        let s = tape.scatter_add_rows(rec.beta, rec.neighbors.clone(), nodes)?;
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    match total {
        Some(t) => tape.scale(t, 1.0 / heads as f64),
        None => tape.constant(Array::zeros(nodes, 1)),
    }
}

/// `H′ = I ⊙ H`, each row scaled by its importance.
pub fn weight_features(tape: &mut Tape, h: Var, importance: Var) -> Result<Var> {
    tape.mul(h, importance)
}

#[derive(Debug, Clone, Copy)]
pub struct Interaction {
    /// Pooled interaction vector `O`, `1 × d`.
    pub o: Var,
    /// Scaled dot-product attention over nodes, `1 × N`.
    pub weights: Var,
}

/// `softmax(q H′ᵀ / √d) H′` for a `1 × d` query `q`.
pub fn hypothesis_interaction(tape: &mut Tape, q: Var, h_prime: Var) -> Result<Interaction> {
    let (n, d) = tape.shape(h_prime);
    if n == 0 {
        return Err(Error::Contract("interaction over an empty node set".into()));
    }
    let h_t = tape.transpose(h_prime)?;
    let scores = tape.matmul(q, h_t)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let o = tape.matmul(weights, h_prime)?;
    Ok(Interaction { o, weights })
}

/// Interaction rows paired with each node of `h_prime` under `mode`.
pub fn interaction_rows(tape: &mut Tape, mode: InteractionMode, inter: &Interaction, h_prime: Var) -> Result<Var> {
    let (n, _) = tape.shape(h_prime);
    match mode {
        InteractionMode::Global => tape.gather_rows(inter.o, vec![0; n].into()),
        InteractionMode::PerNode => {
            let w_col = tape.transpose(inter.weights)?;
            tape.mul(h_prime, w_col)
        }
    }
}

/// Leaf logits `MLP(h′_i ⊕ o_i)`, `L × 1`. Apply a sigmoid for probabilities.
pub fn explanation_logits(tape: &mut Tape, params: &BoundParams, h_leaves: Var, o_leaves: Var) -> Result<Var> {
    let l = &params.layout;
    let x = tape.concat_cols(&[h_leaves, o_leaves])?;
    let pre = affine(tape, x, params.var(l.exp_w1), params.var(l.exp_b1))?;
    let hidden = tape.elu(pre)?;
    affine(tape, hidden, params.var(l.exp_w2), params.var(l.exp_b2))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 labels (`L × 1`).
pub fn bce_loss(tape: &mut Tape, logits: Var, gold: &Array) -> Result<Var> {
    let (n, _) = tape.shape(logits);
    if gold.shape() != (n, 1) {
        return Err(Error::Shape {
            op: "bce_loss",
            detail: format!("{n} scores against {:?} labels", gold.shape()),
        });
    }
    let s = tape.sigmoid(logits)?;
    let neg_logits = tape.neg(logits)?;
    let one_minus = tape.sigmoid(neg_logits)?;
    let log_s = tape.log(s, LOG_FLOOR)?;
    let log_1ms = tape.log(one_minus, LOG_FLOOR)?;
    let y = tape.constant(gold.clone())?;
    let not_y = tape.constant(gold.map(|v| 1.0 - v))?;
    let pos = tape.mul(log_s, y)?;
    let neg = tape.mul(log_1ms, not_y)?;
    let both = tape.add(pos, neg)?;
    let total = tape.sum(both)?;
    tape.scale(total, -1.0 / n as f64)
}

/// Plain-value form of [`bce_loss`] on probabilities, clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_value(scores: &[f64], gold: &[f64]) -> f64 {
    let n = scores.len().max(1) as f64;
    scores
        .iter()
        .zip(gold)
        .map(|(&s, &y)| {
            let s = s.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtractionMode {
    /// Select leaves with score ≥ τ.
    Threshold(f64),
    /// Select the k highest-scoring leaves of each document.
    TopK(usize),
}

impl Default for ExtractionMode {
    fn default() -> Self {
        ExtractionMode::Threshold(0.5)
    }
}

impl ExtractionMode {
    pub fn validate(self) -> Result<()> {
        match self {
            ExtractionMode::Threshold(t) if !(t > 0.0 && t < 1.0) => {
                Err(Error::InvalidArgument(format!("threshold must lie in (0, 1), got {t}")))
            }
            ExtractionMode::TopK(0) => Err(Error::InvalidArgument("top-k needs k ≥ 1".into())),
            _ => Ok(()),
        }
    }
}

/// 1-based ordinals chosen from per-leaf scores (index 0 is ordinal 1).
pub fn select(scores: &[f64], mode: ExtractionMode) -> BTreeSet<usize> {
    match mode {
        ExtractionMode::Threshold(t) => scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= t)
            .map(|(i, _)| i + 1)
            .collect(),
        ExtractionMode::TopK(k) => {
            if k > scores.len() {
                log::warn!("top-k of {k} exceeds {} leaves; selecting all", scores.len());
            }
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.into_iter().take(k).map(|i| i + 1).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationResult {
    /// Leaf probabilities per document, in ordinal order.
    pub scores: [Vec<f64>; 2],
    pub selected: Explanation,
    /// Selected EDU texts per document, in document order.
    pub text: [String; 2],
}

pub fn extract_explanations(
    scores: [Vec<f64>; 2],
    mode: ExtractionMode,
    doc1: &Document,
    doc2: &Document,
) -> ExplanationResult {
    let selected = Explanation {
        doc1: select(&scores[0], mode),
        doc2: select(&scores[1], mode),
    };
    let text = [doc1.text_of(&selected.doc1), doc2.text_of(&selected.doc2)];
    ExplanationResult { scores, selected, text }
}

#[cfg(test)]
mod tests;

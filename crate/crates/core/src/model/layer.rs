use std::sync::Arc;

use super::config::RelationNorm;
use super::params::BoundParams;
use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{RelationEdges, RstGraph};
use crate::interchange::RelationLabel;

/// Graph topology and node features in the form the layers consume.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub nodes: usize,
    pub relations: Vec<RelationEdges>,
    pub features: Array,
}

impl GraphInput {
    pub fn from_graph(g: &RstGraph) -> Result<Self> {
        Ok(Self {
            nodes: g.node_count(),
            relations: g.relation_edges(),
            features: Array::from_rows(&g.feature_rows())?,
        })
    }

    pub fn present_relations(&self) -> Vec<RelationLabel> {
        self.relations.iter().map(|r| r.relation).collect()
    }
}

/// Normalized attention of one relation and head; `beta[e]` weighs edge `e`.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub relation: RelationLabel,
    pub head: usize,
    /// The projection parameter this head used.
    pub proj: Var,
    pub targets: Arc<[usize]>,
    pub neighbors: Arc<[usize]>,
    /// Column of per-edge weights, `E × 1`.
    pub beta: Var,
}

#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub h: Var,
    pub attention: Vec<AttentionRecord>,
    /// Relation weights over the present relations (`1 × |R|`), absent for edgeless graphs.
    pub alpha: Option<Var>,
}

/// Softmax of the learned relation scalars restricted to `present`, as a `1 × |present|` row.
pub fn relation_weights(tape: &mut Tape, params: &BoundParams, present: &[RelationLabel]) -> Result<Var> {
    if present.is_empty() {
        return Err(Error::InvalidArgument("relation weights over an empty relation set".into()));
    }
    let idx: Arc<[usize]> = present.iter().map(|r| r.index()).collect::<Vec<_>>().into();
    let w = params.var(params.layout.relation_weight);
    let picked = tape.gather_rows(w, idx)?;
    let row = tape.transpose(picked)?;
    tape.softmax_rows(row)
}

/// Per-edge attention `β`: softmax over each target's incoming edges of
/// `ELU(a_self · z_target + a_nbr · z_neighbor)`. `z` is the projected node matrix.
pub fn attention_coeffs(tape: &mut Tape, z: Var, a: Var, edges: &RelationEdges) -> Result<Var> {
    let a_t = tape.transpose(a)?;
    let scores = tape.matmul(z, a_t)?;
    let s_self = tape.slice_cols(scores, 0, 1)?;
    let s_nbr = tape.slice_cols(scores, 1, 2)?;
    let at_target = tape.gather_rows(s_self, edges.targets.clone())?;
    let at_nbr = tape.gather_rows(s_nbr, edges.neighbors.clone())?;
    let e = tape.add(at_target, at_nbr)?;
    let e = tape.elu(e)?;
    tape.segment_softmax(e, edges.targets.clone())
}

/// One relation-aware attention layer (`layer` is 1 or 2).
///
/// Output rows are `ELU(m_i) + P h_i`, optionally masked by `dropout`, where
/// `m_i` averages over relations the `α`-weighted, head-averaged attention sums.
/// `P` is learned at layer 1 and the identity at layer 2.
pub fn rst_gat_layer(
    tape: &mut Tape,
    params: &BoundParams,
    graph: &GraphInput,
    h: Var,
    layer: usize,
    dropout: Option<Arc<Array>>,
) -> Result<LayerOutput> {
    let cfg = &params.config;
    let (n, d_in) = tape.shape(h);
    if n != graph.nodes {
        return Err(Error::Shape {
            op: "rst_gat_layer",
            detail: format!("{n} feature rows for {} nodes", graph.nodes),
        });
    }
    let expected_in = if layer == 1 { cfg.d_in } else { cfg.d_hidden };
    if d_in != expected_in {
        return Err(Error::Dimension {
            name: format!("layer {layer} input width"),
            expected: expected_in,
            found: d_in,
        });
    }
    let heads = cfg.heads(layer);

    let mut attention = Vec::new();
    let mut alpha = None;
    let mut message: Option<Var> = None;
    if !graph.relations.is_empty() {
        let present = graph.present_relations();
        let a = relation_weights(tape, params, &present)?;
        alpha = Some(a);
        for (ri, edges) in graph.relations.iter().enumerate() {
            let mut rel_sum: Option<Var> = None;
            for k in 0..heads {
                let w = params.proj(layer, edges.relation, k);
                let w_t = tape.transpose(w)?;
                let z = tape.matmul(h, w_t)?;
                let beta = attention_coeffs(tape, z, params.attn(layer, edges.relation, k), edges)?;
                let zn = tape.gather_rows(z, edges.neighbors.clone())?;
                let weighted = tape.mul(zn, beta)?;
                let m = tape.scatter_add_rows(weighted, edges.targets.clone(), n)?;
                rel_sum = Some(match rel_sum {
                    Some(s) => tape.add(s, m)?,
                    None => m,
                });
                attention.push(AttentionRecord {
                    relation: edges.relation,
                    head: k,
                    proj: w,
                    targets: edges.targets.clone(),
                    neighbors: edges.neighbors.clone(),
                    beta,
                });
            }
            let rel_sum = rel_sum.expect("at least one head");
            let rel_avg = tape.scale(rel_sum, 1.0 / heads as f64)?;
            let a_r = tape.slice_cols(a, ri, ri + 1)?;
            let term = tape.mul(rel_avg, a_r)?;
            message = Some(match message {
                Some(m) => tape.add(m, term)?,
                None => term,
            });
        }
        let divisor = match cfg.relation_norm {
            RelationNorm::Present => graph.relations.len(),
            RelationNorm::Global => RelationLabel::COUNT,
        };
        message = Some(tape.scale(message.expect("non-empty relations"), 1.0 / divisor as f64)?);
    }

    let skip = if layer == 1 {
        let p_t = tape.transpose(params.var(params.layout.residual))?;
        tape.matmul(h, p_t)?
    } else {
        h
    };
    let mut out = match message {
        Some(m) => {
            let act = tape.elu(m)?;
            tape.add(act, skip)?
        }
        // ELU(0) = 0: an edgeless graph only carries the skip path
        None => skip,
    };
    if let Some(mask) = dropout {
        out = tape.dropout(out, mask)?;
    }
    Ok(LayerOutput { h: out, attention, alpha })
}

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use super::config::{ModelConfig, TripletMode};
use super::heads::{classify, cross_entropy, pool, total_loss, triplet_loss};
use super::layer::{rst_gat_layer, AttentionRecord, GraphInput};
use super::params::BoundParams;
use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::explain::{
    bce_loss, explanation_logits, hypothesis_interaction, interaction_rows, node_importance, weight_features,
};
use crate::graph::{build_doc_graph, fuse_graphs, FuseOptions, RelationScheme, RstGraph};
use crate::interchange::{EmbeddingTable, Instance, Label, RelationLabel};

#[derive(Debug, Clone)]
pub struct PreparedHypothesis {
    pub id: String,
    pub label: Label,
    /// `1 × d_in`.
    pub embedding: Array,
    /// Gold leaf labels, doc-1 leaves then doc-2 leaves (`L × 1`).
    pub gold_leaves: Array,
}

/// One premise (two documents) with its graphs and all hypotheses attached to it.
#[derive(Debug, Clone)]
pub struct PreparedGroup {
    pub group_id: String,
    /// Single-document graphs, used for importance.
    pub docs: [GraphInput; 2],
    pub doc_graphs: [RstGraph; 2],
    pub leaf_counts: [usize; 2],
    /// Fused premise graph, used for classification.
    pub fused: GraphInput,
    pub fused_graph: RstGraph,
    pub hypotheses: Vec<PreparedHypothesis>,
    /// Positions of the source instances in the dataset slice given to [`prepare_group`].
    pub instance_indices: Vec<usize>,
    /// Hypothesis positions for (Entailment, Neutral, Contradiction) when all three exist once.
    pub triplet: Option<[usize; 3]>,
}

impl PreparedGroup {
    /// Every relation carried by any of the group's graphs.
    pub fn relations(&self) -> BTreeSet<RelationLabel> {
        let mut out = self.fused_graph.relation_set().clone();
        for g in &self.doc_graphs {
            out.extend(g.relation_set().iter().copied());
        }
        out
    }

    /// Rows of the leaf nodes in the doc-1 ⊕ doc-2 node stack.
    pub fn leaf_rows(&self) -> Vec<usize> {
        let n1 = self.docs[0].nodes;
        (0..self.leaf_counts[0])
            .chain((0..self.leaf_counts[1]).map(|i| n1 + i))
            .collect()
    }
}

/// Builds graphs for a premise group. All instances must share the premise of the first.
pub fn prepare_group(
    dataset: &[Instance],
    members: &[usize],
    table: &EmbeddingTable,
    fuse: FuseOptions,
) -> Result<PreparedGroup> {
    let first = members
        .first()
        .map(|&i| &dataset[i])
        .ok_or_else(|| Error::InvalidArgument("empty premise group".into()))?;
    let emb = table.for_instance(first)?;
    let mut docs = Vec::with_capacity(2);
    let mut full = Vec::with_capacity(2);
    for (doc, feats) in [(&first.doc1, &emb.doc1), (&first.doc2, &emb.doc2)] {
        docs.push(build_doc_graph(&doc.edus, &doc.tree, feats, RelationScheme::default())?);
        full.push(build_doc_graph(&doc.edus, &doc.tree, feats, RelationScheme::Full)?);
    }
    let fused_graph = fuse_graphs(&full[0], &full[1], fuse)?;
    let leaf_counts = [first.doc1.edu_count(), first.doc2.edu_count()];

    let mut hypotheses = Vec::with_capacity(members.len());
    for &i in members {
        let inst = &dataset[i];
        if !inst.same_premise(first) {
            return Err(Error::validation(
                format!("group {}", first.group_id),
                format!("instance {} has a different premise than {}", inst.id, first.id),
            ));
        }
        let e = table.for_instance(inst)?;
        let mut gold = Vec::with_capacity(leaf_counts[0] + leaf_counts[1]);
        gold.extend((1..=leaf_counts[0]).map(|o| f64::from(u8::from(inst.explanation.doc1.contains(&o)))));
        gold.extend((1..=leaf_counts[1]).map(|o| f64::from(u8::from(inst.explanation.doc2.contains(&o)))));
        hypotheses.push(PreparedHypothesis {
            id: inst.id.clone(),
            label: inst.label,
            embedding: Array::row_vector(e.hypothesis.clone()),
            gold_leaves: Array::column_vector(gold),
        });
    }
    let mut slots = [None; 3];
    let mut complete = true;
    for (pos, h) in hypotheses.iter().enumerate() {
        let slot = &mut slots[h.label.index()];
        if slot.is_some() {
            complete = false;
        }
        *slot = Some(pos);
    }
    let triplet = match slots {
        [Some(e), Some(n), Some(c)] if complete => Some([e, n, c]),
        _ => None,
    };

    let [d1, d2]: [RstGraph; 2] = docs.try_into().expect("two documents");
    Ok(PreparedGroup {
        group_id: first.group_id.clone(),
        docs: [GraphInput::from_graph(&d1)?, GraphInput::from_graph(&d2)?],
        doc_graphs: [d1, d2],
        leaf_counts,
        fused: GraphInput::from_graph(&fused_graph)?,
        fused_graph,
        hypotheses,
        instance_indices: members.to_vec(),
        triplet,
    })
}

/// Dropout masks for one forward pass, already scaled by `1 / (1 − p)`.
#[derive(Debug, Clone, Default)]
pub struct GroupMasks {
    pub docs: [Option<Arc<Array>>; 2],
    pub fused: [Option<Arc<Array>>; 2],
}

impl GroupMasks {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn sample<R: Rng>(group: &PreparedGroup, cfg: &ModelConfig, rng: &mut R) -> Self {
        if cfg.dropout == 0.0 {
            return Self::none();
        }
        let keep = 1.0 - cfg.dropout;
        let mut mask = |rows: usize| {
            let mut a = Array::zeros(rows, cfg.d_hidden);
            for v in a.data_mut() {
                *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
            }
            Some(Arc::new(a))
        };
        let docs = [mask(group.docs[0].nodes), mask(group.docs[1].nodes)];
        let fused = [mask(group.fused.nodes), mask(group.fused.nodes)];
        Self { docs, fused }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HypothesisForward {
    pub probs: Var,
    /// Leaf probabilities, `L × 1`, doc-1 leaves first.
    pub leaf_scores: Var,
    /// Representation compared against the premise anchor by the triplet loss.
    pub rep: Var,
    pub l_cls: Var,
    pub l_exp: Var,
}

#[derive(Debug, Clone)]
pub struct GroupForward {
    pub total: Var,
    pub l_cls: Var,
    pub l_exp: Var,
    pub l_trip: Var,
    pub anchor: Var,
    pub hypotheses: Vec<HypothesisForward>,
    /// Layer-1 attention on the two document graphs.
    pub doc_attention: [Vec<AttentionRecord>; 2],
    /// Layer-1 attention on the fused graph.
    pub fused_attention: Vec<AttentionRecord>,
    /// Node importance of each document graph, `n × 1`.
    pub importance: [Var; 2],
}

/// Full forward pass over a premise group: losses are group means over hypotheses,
/// with the triplet term present only for complete groups.
pub fn forward_group(
    tape: &mut Tape,
    params: &BoundParams,
    group: &PreparedGroup,
    masks: &GroupMasks,
) -> Result<GroupForward> {
    let cfg = &params.config;
    if group.hypotheses.is_empty() {
        return Err(Error::InvalidArgument(format!("group {} has no hypotheses", group.group_id)));
    }

    let mut weighted = Vec::with_capacity(2);
    let mut doc_attention: [Vec<AttentionRecord>; 2] = [Vec::new(), Vec::new()];
    let mut importance = Vec::with_capacity(2);
    for (d, graph) in group.docs.iter().enumerate() {
        let x = tape.constant(graph.features.clone())?;
        let out = rst_gat_layer(tape, params, graph, x, 1, masks.docs[d].clone())?;
        let imp = node_importance(tape, &out.attention, graph.nodes, cfg.heads_layer1)?;
        weighted.push(weight_features(tape, out.h, imp)?);
        importance.push(imp);
        doc_attention[d] = out.attention;
    }
    let h_prime = tape.concat_rows(&weighted)?;
    let leaf_rows: Arc<[usize]> = group.leaf_rows().into();
    let h_leaves = tape.gather_rows(h_prime, leaf_rows.clone())?;

    let x = tape.constant(group.fused.features.clone())?;
    let l1 = rst_gat_layer(tape, params, &group.fused, x, 1, masks.fused[0].clone())?;
    let l2 = rst_gat_layer(tape, params, &group.fused, l1.h, 2, masks.fused[1].clone())?;
    let anchor = pool(tape, l2.h)?;

    let hyp_proj_t = tape.transpose(params.var(params.layout.hyp_proj))?;
    let trip_proj_t = tape.transpose(params.var(params.layout.triplet_proj))?;
    let mut hyps = Vec::with_capacity(group.hypotheses.len());
    for hyp in &group.hypotheses {
        let h_hyp = tape.constant(hyp.embedding.clone())?;
        let cls = classify(tape, params, anchor, h_hyp)?;
        let l_cls = cross_entropy(tape, cls.probs, hyp.label.index())?;

        let q = tape.matmul(h_hyp, hyp_proj_t)?;
        let inter = hypothesis_interaction(tape, q, h_prime)?;
        let rows = interaction_rows(tape, cfg.interaction, &inter, h_prime)?;
        let o_leaves = tape.gather_rows(rows, leaf_rows.clone())?;
        let logits = explanation_logits(tape, params, h_leaves, o_leaves)?;
        let leaf_scores = tape.sigmoid(logits)?;
        let l_exp = bce_loss(tape, logits, &hyp.gold_leaves)?;

        let rep = match cfg.triplet_mode {
            TripletMode::PairProjection => tape.matmul(cls.hidden, trip_proj_t)?,
            TripletMode::HypothesisProjection => q,
        };
        hyps.push(HypothesisForward {
            probs: cls.probs,
            leaf_scores,
            rep,
            l_cls,
            l_exp,
        });
    }

    let inv = 1.0 / hyps.len() as f64;
    let l_cls = mean(tape, hyps.iter().map(|h| h.l_cls), inv)?;
    let l_exp = mean(tape, hyps.iter().map(|h| h.l_exp), inv)?;
    let l_trip = match group.triplet {
        Some([e, n, c]) => triplet_loss(
            tape,
            anchor,
            hyps[e].rep,
            hyps[n].rep,
            hyps[c].rep,
            cfg.sigma,
            cfg.theta,
        )?,
        None => tape.constant(Array::scalar(0.0))?,
    };
    let total = total_loss(tape, l_exp, l_cls, l_trip, cfg.gamma, cfg.lambda)?;
    let [i1, i2]: [Var; 2] = importance.try_into().expect("two documents");
    Ok(GroupForward {
        total,
        l_cls,
        l_exp,
        l_trip,
        anchor,
        hypotheses: hyps,
        doc_attention,
        fused_attention: l1.attention,
        importance: [i1, i2],
    })
}

fn mean(tape: &mut Tape, vars: impl Iterator<Item = Var>, inv: f64) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for v in vars {
        acc = Some(match acc {
            Some(a) => tape.add(a, v)?,
            None => v,
        });
    }
    tape.scale(acc.expect("non-empty"), inv)
}

/// Argmax with ties resolved toward the lower label index.
pub fn predict(probs: &[f64]) -> Label {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().take(3) {
        if p > probs[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("three classes")
}

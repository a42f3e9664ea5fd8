use super::{Edge, GraphNode, NodeKind, RstGraph};
use crate::error::{Error, Result};
use crate::interchange::RelationLabel;

pub const DEFAULT_DELTA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuseOptions {
    /// Cosine threshold; pairs strictly above it are linked.
    pub delta: f64,
    /// Only consider leaf–leaf pairs as lexical candidates.
    pub leaves_only: bool,
}

impl Default for FuseOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            leaves_only: false,
        }
    }
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine similarity of vectors with widths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity undefined for a zero vector".into(),
        ));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Similarity of every candidate cross pair; `None` where a feature is zero.
fn cross_similarities(g1: &RstGraph, g2: &RstGraph, leaves_only: bool) -> Result<Vec<(usize, usize, Option<f64>)>> {
    let candidate = |n: &GraphNode| !leaves_only || n.kind == NodeKind::Leaf;
    let mut out = Vec::new();
    for a in g1.nodes().iter().filter(|n| candidate(n)) {
        for b in g2.nodes().iter().filter(|n| candidate(n)) {
            let sim = match cosine_sim(&a.feature, &b.feature) {
                Ok(s) => Some(s),
                Err(_) if a.feature.len() == b.feature.len() => None,
                Err(e) => return Err(e),
            };
            out.push((a.id, b.id, sim));
        }
    }
    Ok(out)
}

/// Cross-document node pairs `(i in g1, j in g2)` with cosine similarity strictly above `delta`.
pub fn lexical_pairs(g1: &RstGraph, g2: &RstGraph, delta: f64, leaves_only: bool) -> Result<Vec<(usize, usize)>> {
    Ok(cross_similarities(g1, g2, leaves_only)?
        .into_iter()
        .filter(|(_, _, s)| s.is_some_and(|s| s > delta))
        .map(|(i, j, _)| (i, j))
        .collect())
}

/// Disjoint union of `g1` and `g2` (g2's ids shifted by `|V1|`, its nodes tagged
/// source 1) plus a `Lexical` edge pair for every cross pair above the threshold.
pub fn fuse_graphs(g1: &RstGraph, g2: &RstGraph, opts: FuseOptions) -> Result<RstGraph> {
    if !(opts.delta > 0.0 && opts.delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1], got {}",
            opts.delta
        )));
    }
    let offset = g1.node_count();
    let mut nodes: Vec<GraphNode> = g1.nodes().to_vec();
    nodes.extend(g2.nodes().iter().map(|n| GraphNode {
        id: n.id + offset,
        source: n.source + 1,
        ..n.clone()
    }));
    let mut edges: Vec<Edge> = g1.edges().to_vec();
    edges.extend(g2.edges().iter().map(|e| Edge {
        src: e.src + offset,
        dst: e.dst + offset,
        relation: e.relation,
    }));
    for (i, j) in lexical_pairs(g1, g2, opts.delta, opts.leaves_only)? {
        edges.push(Edge { src: i, dst: j + offset, relation: RelationLabel::Lexical });
        edges.push(Edge { src: j + offset, dst: i, relation: RelationLabel::Lexical });
    }
    RstGraph::from_parts(nodes, edges)
}

/// Number of directed `Lexical` edges fusion would add at each threshold.
pub fn delta_sweep(g1: &RstGraph, g2: &RstGraph, deltas: &[f64], leaves_only: bool) -> Result<Vec<(f64, usize)>> {
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("deltas must be sorted ascending".into()));
    }
    let sims = cross_similarities(g1, g2, leaves_only)?;
    Ok(deltas
        .iter()
        .map(|&d| {
            let count = sims.iter().filter(|(_, _, s)| s.is_some_and(|s| s > d)).count();
            (d, 2 * count)
        })
        .collect())
}

//! Discourse graphs: one per document from its RST tree, plus the fused premise
//! graph that links the two documents with `Lexical` edges.

mod fuse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

pub use fuse::{cosine_sim, delta_sweep, fuse_graphs, lexical_pairs, FuseOptions, DEFAULT_DELTA};

use crate::error::{Error, Result};
use crate::interchange::{EduSpan, RelationLabel, RstTreeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Branch,
}

impl NodeKind {
    /// The numeric node type: 1 for leaves, 0 for branches.
    pub fn type_flag(self) -> u8 {
        match self {
            NodeKind::Leaf => 1,
            NodeKind::Branch => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: usize,
    /// Index of the source document (0 for single-document graphs; 0 or 1 after fusion).
    pub source: usize,
    /// Covered EDU ordinals `(s, t)`, inclusive.
    pub span: (usize, usize),
    pub text: String,
    pub feature: Vec<f64>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationLabel,
}

/// How tree relations are carried into the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationScheme {
    /// Restrict to the single-document subset; other labels become `fallback`.
    SingleDocument { fallback: RelationLabel },
    /// Keep every label as parsed.
    Full,
}

impl Default for RelationScheme {
    fn default() -> Self {
        RelationScheme::SingleDocument {
            fallback: RelationLabel::Elaboration,
        }
    }
}

impl RelationScheme {
    pub fn map(self, r: RelationLabel) -> RelationLabel {
        match self {
            RelationScheme::SingleDocument { fallback } if !r.is_single_document() => fallback,
            _ => r,
        }
    }
}

/// Incoming edges of one relation, in the form the attention layers consume:
/// edge `e` carries a message from `neighbors[e]` to `targets[e]`.
#[derive(Debug, Clone)]
pub struct RelationEdges {
    pub relation: RelationLabel,
    pub targets: Arc<[usize]>,
    pub neighbors: Arc<[usize]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RstGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    relations: BTreeSet<RelationLabel>,
}

impl RstGraph {
    pub(crate) fn from_parts(nodes: Vec<GraphNode>, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.src == e.dst {
                return Err(Error::Contract(format!("self-edge on node {}", e.src)));
            }
            if e.src >= nodes.len() || e.dst >= nodes.len() {
                return Err(Error::Contract(format!(
                    "edge ({}, {}) outside {} nodes",
                    e.src,
                    e.dst,
                    nodes.len()
                )));
            }
        }
        let relations = edges.iter().map(|e| e.relation).collect();
        Ok(Self {
            nodes,
            edges,
            relations,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Relations carried by at least one edge.
    pub fn relation_set(&self) -> &BTreeSet<RelationLabel> {
        &self.relations
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_ids(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Leaf)
            .map(|n| n.id)
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.feature.len())
    }

    /// Node features stacked into rows, in node-id order.
    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.nodes.iter().map(|n| n.feature.as_slice()).collect()
    }

    /// `N_r(v)`: sources of `r`-edges arriving at `v`.
    pub fn neighbors(&self, v: usize, r: RelationLabel) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.dst == v && e.relation == r)
            .map(|e| e.src)
            .collect()
    }

    /// Per-relation incoming edge lists, relations in vocabulary order and edges sorted by target.
    pub fn relation_edges(&self) -> Vec<RelationEdges> {
        let mut by_rel: BTreeMap<RelationLabel, Vec<(usize, usize)>> = BTreeMap::new();
        for e in &self.edges {
            by_rel.entry(e.relation).or_default().push((e.dst, e.src));
        }
        by_rel
            .into_iter()
            .map(|(relation, mut pairs)| {
                pairs.sort_unstable();
                RelationEdges {
                    relation,
                    targets: pairs.iter().map(|p| p.0).collect::<Vec<_>>().into(),
                    neighbors: pairs.iter().map(|p| p.1).collect::<Vec<_>>().into(),
                }
            })
            .collect()
    }

    /// Relabels nodes: new id of old node `i` is `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("permutation length differs from node count".into()));
        }
        let mut nodes = self.nodes.clone();
        for (old, node) in self.nodes.iter().enumerate() {
            let mut n = node.clone();
            n.id = perm[old];
            nodes[perm[old]] = n;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                relation: e.relation,
            })
            .collect();
        Self::from_parts(nodes, edges)
    }

    /// Adjacency listing for debugging output.
    pub fn dump(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct DumpNode<'a> {
            id: usize,
            source: usize,
            span: (usize, usize),
            kind: NodeKind,
            text: &'a str,
            neighbors: Vec<(usize, &'static str)>,
        }
        let mut adj: HashMap<usize, Vec<(usize, &'static str)>> = HashMap::new();
        for e in &self.edges {
            adj.entry(e.src).or_default().push((e.dst, e.relation.name()));
        }
        let nodes: Vec<DumpNode> = self
            .nodes
            .iter()
            .map(|n| DumpNode {
                id: n.id,
                source: n.source,
                span: n.span,
                kind: n.kind,
                text: &n.text,
                neighbors: adj.remove(&n.id).unwrap_or_default(),
            })
            .collect();
        serde_json::json!({
            "nodes": nodes,
            "edge_count": self.edges.len(),
            "relations": self.relations.iter().map(|r| r.name()).collect::<Vec<_>>(),
        })
    }
}

/// Builds the graph of one document.
///
/// Leaves come first (node `i` is EDU ordinal `i + 1`), then one branch node per
/// tree tuple in tuple order. A branch's feature is the mean of its two children's
/// features and its text is their texts joined by a space. Each tuple contributes
/// parent↔left edges labelled `r_st` and parent↔right edges labelled `r_tu`.
pub fn build_doc_graph(
    spans: &[EduSpan],
    tree: &RstTreeSpec,
    feats: &[Vec<f64>],
    scheme: RelationScheme,
) -> Result<RstGraph> {
    let n = spans.len();
    if n == 0 {
        return Err(Error::InvalidArgument("document has no EDUs".into()));
    }
    if feats.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} feature vectors for {n} EDUs",
            feats.len()
        )));
    }
    tree.validate(n).map_err(Error::InvalidArgument)?;

    let mut nodes: Vec<GraphNode> = spans
        .iter()
        .zip(feats)
        .enumerate()
        .map(|(i, (span, f))| GraphNode {
            id: i,
            source: 0,
            span: (i + 1, i + 1),
            text: span.text.clone(),
            feature: f.clone(),
            kind: NodeKind::Leaf,
        })
        .collect();

    let mut by_span: HashMap<(usize, usize), usize> = (0..n).map(|i| ((i + 1, i + 1), i)).collect();
    for (k, tp) in tree.tuples.iter().enumerate() {
        by_span.insert(tp.span(), n + k);
    }

    // children are strictly shorter than parents, so shortest-first is a valid build order
    let mut order: Vec<usize> = (0..tree.tuples.len()).collect();
    order.sort_by_key(|&k| tree.tuples[k].u - tree.tuples[k].s);
    let mut branch: Vec<Option<GraphNode>> = vec![None; tree.tuples.len()];
    let mut edges = Vec::with_capacity(4 * tree.tuples.len());
    for &k in &order {
        let tp = tree.tuples[k];
        let id = n + k;
        let child = |span: (usize, usize), nodes: &[GraphNode], branch: &[Option<GraphNode>]| {
            let c = *by_span.get(&span).ok_or_else(|| {
                Error::InvalidArgument(format!("tuple references missing span {span:?}"))
            })?;
            let node = if c < n { nodes[c].clone() } else { branch[c - n].clone().expect("child built first") };
            Ok::<_, Error>((c, node))
        };
        let (l, left) = child(tp.left(), &nodes, &branch)?;
        let (r, right) = child(tp.right(), &nodes, &branch)?;
        let feature = left
            .feature
            .iter()
            .zip(&right.feature)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        branch[k] = Some(GraphNode {
            id,
            source: 0,
            span: tp.span(),
            text: format!("{} {}", left.text, right.text),
            feature,
            kind: NodeKind::Branch,
        });
        for (c, rel) in [(l, scheme.map(tp.r_st)), (r, scheme.map(tp.r_tu))] {
            edges.push(Edge { src: id, dst: c, relation: rel });
            edges.push(Edge { src: c, dst: id, relation: rel });
        }
    }
    nodes.extend(branch.into_iter().map(|b| b.expect("every tuple built")));
    edges.sort_unstable_by_key(|e| (e.src.min(e.dst), e.src.max(e.dst), e.src, e.relation));
    RstGraph::from_parts(nodes, edges)
}

#[cfg(test)]
mod tests;

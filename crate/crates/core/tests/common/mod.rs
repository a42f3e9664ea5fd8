//! Independent reference computations shared by the integration tests. Nothing
//! here calls into the library's numeric code; only plain loops over `Vec<f64>`.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cdcl_core::graph::{build_doc_graph, RelationScheme, RstGraph};
use cdcl_core::interchange::{EduSpan, RelationLabel};
use cdcl_core::model::{ParameterStore, RelationNorm};
use cdcl_core::synthetic::random_tree;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn spans(n: usize) -> Vec<EduSpan> {
    (1..=n)
        .map(|i| EduSpan { index: i, start: 0, end: 1, text: format!("e{i}") })
        .collect()
}

pub fn random_rows<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Up to `max_labels` distinct discourse labels, never `Lexical`.
pub fn random_labels<R: Rng>(rng: &mut R, max_labels: usize) -> Vec<RelationLabel> {
    let mut pool: Vec<RelationLabel> = RelationLabel::ALL[..RelationLabel::COUNT - 1].to_vec();
    pool.shuffle(rng);
    pool.truncate(rng.gen_range(1..=max_labels));
    pool
}

pub fn random_doc<R: Rng>(rng: &mut R, n: usize, labels: &[RelationLabel], feats: &[Vec<f64>]) -> RstGraph {
    let tree = random_tree(n, rng, labels);
    build_doc_graph(&spans(n), &tree, feats, RelationScheme::Full).expect("valid random tree")
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Cross pairs above `delta` by direct cosine over every candidate pair.
pub fn brute_lexical(g1: &RstGraph, g2: &RstGraph, delta: f64, leaves_only: bool) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    let leaf1 = g1.leaf_ids();
    let leaf2 = g2.leaf_ids();
    for (i, a) in g1.nodes().iter().enumerate() {
        for (j, b) in g2.nodes().iter().enumerate() {
            if leaves_only && !(leaf1.contains(&i) && leaf2.contains(&j)) {
                continue;
            }
            let na = dot(&a.feature, &a.feature).sqrt();
            let nb = dot(&b.feature, &b.feature).sqrt();
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            if dot(&a.feature, &b.feature) / (na * nb) > delta {
                out.insert((i, j));
            }
        }
    }
    out
}

fn matrix(store: &ParameterStore, index: usize) -> Vec<Vec<f64>> {
    let a = &store.arrays()[index];
    (0..a.rows()).map(|r| a.row(r).to_vec()).collect()
}

fn project(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, x)).collect()
}

/// One attention layer computed edge by edge from the raw parameter arrays.
pub fn reference_layer(store: &ParameterStore, g: &RstGraph, h: &[Vec<f64>], layer: usize) -> Vec<Vec<f64>> {
    let cfg = store.config();
    let layout = store.layout();
    let n = g.node_count();
    let heads = cfg.heads(layer);

    // neighbors of each node under each relation
    let mut nbrs: BTreeMap<RelationLabel, Vec<Vec<usize>>> = BTreeMap::new();
    for e in g.edges() {
        nbrs.entry(e.relation).or_insert_with(|| vec![Vec::new(); n])[e.dst].push(e.src);
    }
    let rel_w = &store.arrays()[layout.relation_weight];
    let z_sum: f64 = nbrs.keys().map(|r| rel_w.get(r.index(), 0).exp()).sum();

    let mut m = vec![vec![0.0; cfg.d_hidden]; n];
    for (r, lists) in &nbrs {
        let alpha = rel_w.get(r.index(), 0).exp() / z_sum;
        for k in 0..heads {
            let w = matrix(store, layout.proj[layer - 1][r.index()][k]);
            let a = matrix(store, layout.attn[layer - 1][r.index()][k]);
            let z: Vec<Vec<f64>> = h.iter().map(|x| project(&w, x)).collect();
            for (i, js) in lists.iter().enumerate() {
                if js.is_empty() {
                    continue;
                }
                let scores: Vec<f64> = js.iter().map(|&j| elu(dot(&a[0], &z[i]) + dot(&a[1], &z[j]))).collect();
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let total: f64 = ex.iter().sum();
                for (e, &j) in js.iter().enumerate() {
                    for c in 0..cfg.d_hidden {
                        m[i][c] += alpha * ex[e] / total * z[j][c] / heads as f64;
                    }
                }
            }
        }
    }
    let divisor = match cfg.relation_norm {
        RelationNorm::Present => nbrs.len().max(1),
        RelationNorm::Global => RelationLabel::COUNT,
    } as f64;
    let residual = matrix(store, layout.residual);
    (0..n)
        .map(|i| {
            let skip = if layer == 1 { project(&residual, &h[i]) } else { h[i].clone() };
            (0..cfg.d_hidden).map(|c| elu(m[i][c] / divisor) + skip[c]).collect()
        })
        .collect()
}

/// Longest common subsequence by enumerating every subsequence of the shorter side.
pub fn brute_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << s.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let mut it = l.iter();
        if (0..s.len()).filter(|i| mask & (1 << i) != 0).all(|i| it.any(|x| *x == s[i])) {
            best = len;
        }
    }
    best
}

/// Every sequence over `0..alphabet` of length at most `max_len`.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

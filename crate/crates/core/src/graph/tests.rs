use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::interchange::TreeTuple;
use crate::synthetic::random_tree;

fn spans(n: usize) -> Vec<EduSpan> {
    (1..=n)
        .map(|i| EduSpan {
            index: i,
            start: 0,
            end: 1,
            text: format!("e{i}"),
        })
        .collect()
}

fn tuple(s: usize, t: usize, u: usize, r: RelationLabel) -> TreeTuple {
    TreeTuple { s, t, u, r_st: r, r_tu: r }
}

fn single(feature: Vec<f64>) -> RstGraph {
    build_doc_graph(&spans(1), &RstTreeSpec::default(), &[feature], RelationScheme::Full).unwrap()
}

#[test]
fn two_leaf_graph_averages_features() {
    let tree = RstTreeSpec { tuples: vec![tuple(1, 1, 2, RelationLabel::Elaboration)] };
    let g = build_doc_graph(&spans(2), &tree, &[vec![1.0, 0.0], vec![0.0, 1.0]], RelationScheme::default()).unwrap();
    assert_eq!(g.node_count(), 3);
    let branch = &g.nodes()[2];
    assert_eq!(branch.kind, NodeKind::Branch);
    assert_eq!(branch.feature, vec![0.5, 0.5]);
    assert_eq!(branch.text, "e1 e2");
    assert_eq!(branch.span, (1, 2));
    assert_eq!(g.edges().len(), 4);
    assert_eq!(g.nodes()[0].kind.type_flag(), 1);
    assert_eq!(branch.kind.type_flag(), 0);
}

#[test]
fn single_edu_graph() {
    let g = single(vec![1.0]);
    assert_eq!(g.node_count(), 1);
    assert!(g.edges().is_empty());
    assert!(g.relation_set().is_empty());
}

#[test]
fn four_leaves_give_seven_nodes_twelve_edges() {
    let tree = RstTreeSpec {
        tuples: vec![
            tuple(1, 2, 4, RelationLabel::Contrast),
            tuple(1, 1, 2, RelationLabel::Cause),
            tuple(3, 3, 4, RelationLabel::Joint),
        ],
    };
    let feats: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0]).collect();
    let g = build_doc_graph(&spans(4), &tree, &feats, RelationScheme::default()).unwrap();
    assert_eq!(g.node_count(), 7);
    // brute force: every tuple links its parent with both children, both directions
    let mut expected = 0;
    for tp in &tree.tuples {
        for _child in [tp.left(), tp.right()] {
            expected += 2;
        }
    }
    assert_eq!(g.edges().len(), expected);
    assert_eq!(expected, 12);
    // Joint is outside the single-document subset
    assert!(g.relation_set().contains(&RelationLabel::Elaboration));
    assert!(!g.relation_set().contains(&RelationLabel::Joint));
    // nested branch: root averages [1,2] branch and [3,4] branch
    let root = g.nodes().iter().find(|n| n.span == (1, 4)).unwrap();
    assert_eq!(root.feature, vec![1.5, 1.0]);
}

#[test]
fn full_scheme_keeps_labels() {
    let tree = RstTreeSpec { tuples: vec![tuple(1, 1, 2, RelationLabel::Joint)] };
    let g = build_doc_graph(&spans(2), &tree, &[vec![1.0], vec![2.0]], RelationScheme::Full).unwrap();
    assert!(g.relation_set().contains(&RelationLabel::Joint));
}

#[test]
fn bad_tree_is_a_construction_error() {
    let tree = RstTreeSpec { tuples: vec![tuple(1, 1, 3, RelationLabel::Cause)] };
    assert!(build_doc_graph(&spans(2), &tree, &[vec![1.0], vec![2.0]], RelationScheme::Full).is_err());
}

#[test]
fn cosine_examples() {
    assert!((cosine_sim(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    // 1 / sqrt(2), computed independently
    let expected = 1.0 / 2f64.sqrt();
    assert!((cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - expected).abs() < 1e-9);
    assert!((expected - 0.70710678).abs() < 1e-8);
    assert!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    assert!(cosine_sim(&[1.0], &[1.0, 1.0]).is_err());
}

#[test]
fn fusion_of_single_nodes() {
    let a = single(vec![1.0, 2.0]);
    let fused = fuse_graphs(&a, &single(vec![1.0, 2.0]), FuseOptions::default()).unwrap();
    assert_eq!(fused.node_count(), 2);
    assert_eq!(fused.edges().len(), 2);
    assert!(fused.edges().iter().all(|e| e.relation == RelationLabel::Lexical));
    assert_eq!(fused.nodes()[1].source, 1);

    let orth = fuse_graphs(&single(vec![1.0, 0.0]), &single(vec![0.0, 1.0]), FuseOptions::default()).unwrap();
    assert!(orth.edges().is_empty());
}

#[test]
fn fusion_links_only_pairs_above_threshold() {
    // doc1 leaf features chosen so one cross pair has cos 0.9 and another 0.75
    let theta9 = 0.9f64.acos();
    let theta75 = 0.75f64.acos();
    let g1 = build_doc_graph(
        &spans(2),
        &RstTreeSpec { tuples: vec![tuple(1, 1, 2, RelationLabel::Cause)] },
        &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
        RelationScheme::Full,
    )
    .unwrap();
    let g2 = build_doc_graph(
        &spans(2),
        &RstTreeSpec { tuples: vec![tuple(1, 1, 2, RelationLabel::Cause)] },
        &[vec![theta9.cos(), theta9.sin(), 0.0], vec![0.0, theta75.sin(), theta75.cos()]],
        RelationScheme::Full,
    )
    .unwrap();
    let leaf_pairs = lexical_pairs(&g1, &g2, 0.8, true).unwrap();
    assert_eq!(leaf_pairs, vec![(0, 0)]);

    // brute-force enumeration over all cross pairs (branches included)
    let mut expected = vec![];
    for a in g1.nodes() {
        for b in g2.nodes() {
            let dot: f64 = a.feature.iter().zip(&b.feature).map(|(x, y)| x * y).sum();
            let na = a.feature.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.feature.iter().map(|x| x * x).sum::<f64>().sqrt();
            if dot / (na * nb) > 0.8 {
                expected.push((a.id, b.id));
            }
        }
    }
    assert_eq!(lexical_pairs(&g1, &g2, 0.8, false).unwrap(), expected);
}

#[test]
fn fusion_rejects_bad_delta() {
    let a = single(vec![1.0]);
    for d in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(fuse_graphs(&a, &a, FuseOptions { delta: d, leaves_only: false }).is_err());
    }
}

#[test]
fn sweep_examples() {
    let feats = vec![vec![1.0, 1.0]; 3];
    let tree3 = RstTreeSpec {
        tuples: vec![tuple(1, 1, 3, RelationLabel::Cause), tuple(2, 2, 3, RelationLabel::Cause)],
    };
    let g1 = build_doc_graph(&spans(3), &tree3, &feats, RelationScheme::Full).unwrap();
    let g2 = single(vec![2.0, 2.0]);
    // identical directions everywhere: m·k cross pairs, two edges each
    let m = g1.node_count();
    let k = g2.node_count();
    assert_eq!(delta_sweep(&g1, &g2, &[0.0], false).unwrap(), vec![(0.0, m * k * 2)]);
    assert_eq!(delta_sweep(&g1, &g2, &[1.0], false).unwrap(), vec![(1.0, 0)]);
    let counts = delta_sweep(&g1, &g2, &[0.5, 0.8, 0.95], false).unwrap();
    assert!(counts.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(delta_sweep(&g1, &g2, &[0.9, 0.5], false).is_err());
}

#[test]
fn relation_edges_match_neighbor_lookup() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = random_tree(6, &mut rng, &RelationLabel::ALL[..18]);
    let feats: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
    let g = build_doc_graph(&spans(6), &tree, &feats, RelationScheme::Full).unwrap();
    for re in g.relation_edges() {
        for v in 0..g.node_count() {
            let mut from_lists: Vec<usize> = re
                .targets
                .iter()
                .zip(re.neighbors.iter())
                .filter(|(t, _)| **t == v)
                .map(|(_, n)| *n)
                .collect();
            let mut direct = g.neighbors(v, re.relation);
            from_lists.sort_unstable();
            direct.sort_unstable();
            assert_eq!(from_lists, direct);
        }
    }
}

proptest! {
    #[test]
    fn node_count_law_and_bidirectionality(n in 1usize..20, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(n, &mut rng, &RelationLabel::ALL[..18]);
        let feats: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, i as f64]).collect();
        let g = build_doc_graph(&spans(n), &tree, &feats, RelationScheme::default()).unwrap();
        prop_assert_eq!(g.node_count(), 2 * n - 1);
        for e in g.edges() {
            prop_assert!(e.src != e.dst);
            let back = Edge { src: e.dst, dst: e.src, relation: e.relation };
            prop_assert!(g.edges().contains(&back));
            prop_assert!(e.relation.is_single_document());
        }
        for node in g.nodes() {
            prop_assert_eq!(node.kind == NodeKind::Leaf, node.span.0 == node.span.1);
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        u in prop::collection::vec(-5.0f64..5.0, 3),
        v in prop::collection::vec(-5.0f64..5.0, 3),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
        let a = cosine_sim(&scaled, &v).unwrap();
        let b = cosine_sim(&u, &v).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&a));
    }
}

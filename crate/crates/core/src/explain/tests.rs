use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{build_doc_graph, RelationScheme};
use crate::interchange::{EduSpan, RelationLabel, RstTreeSpec, TreeTuple};
use crate::model::{rst_gat_layer, GraphInput, ModelConfig, ParameterStore};

fn spans(n: usize) -> Vec<EduSpan> {
    (1..=n)
        .map(|i| EduSpan { index: i, start: 0, end: 1, text: format!("e{i}") })
        .collect()
}

fn cfg() -> ModelConfig {
    ModelConfig { dropout: 0.0, ..ModelConfig::with_widths(3, 3, 4) }
}

fn layer_one(tree: RstTreeSpec, n: usize, seed: u64) -> (Tape, Vec<AttentionRecord>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let g = build_doc_graph(&spans(n), &tree, &feats, RelationScheme::Full).unwrap();
    let input = GraphInput::from_graph(&g).unwrap();
    let store = ParameterStore::init(&cfg(), seed).unwrap();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape).unwrap();
    let x = tape.constant(input.features.clone()).unwrap();
    let out = rst_gat_layer(&mut tape, &p, &input, x, 1, None).unwrap();
    (tape, out.attention, g.node_count())
}

#[test]
fn isolated_node_has_zero_importance() {
    let (mut tape, recs, n) = layer_one(RstTreeSpec::default(), 1, 0);
    let i = node_importance(&mut tape, &recs, n, 4).unwrap();
    assert_eq!(tape.value(i).data(), &[0.0]);
}

#[test]
fn importance_matches_accumulated_attention() {
    let tree = RstTreeSpec {
        tuples: vec![
            TreeTuple { s: 1, t: 1, u: 3, r_st: RelationLabel::Cause, r_tu: RelationLabel::Contrast },
            TreeTuple { s: 2, t: 2, u: 3, r_st: RelationLabel::Joint, r_tu: RelationLabel::Cause },
        ],
    };
    let (mut tape, recs, n) = layer_one(tree, 3, 7);
    let imp = node_importance(&mut tape, &recs, n, 4).unwrap();
    let mut oracle = vec![0.0; n];
    for rec in &recs {
        let beta = tape.value(rec.beta).data().to_vec();
        for (e, &j) in rec.neighbors.iter().enumerate() {
            oracle[j] += beta[e] / 4.0;
        }
    }
    let got = tape.value(imp).data();
    for (a, b) in got.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    // incoming mass per (relation, head) equals the number of attending nodes
    for rec in &recs {
        let total: f64 = tape.value(rec.beta).sum();
        let attending: BTreeSet<usize> = rec.targets.iter().copied().collect();
        assert!((total - attending.len() as f64).abs() < 1e-6);
    }
}

#[test]
fn weighting_scales_rows() {
    let mut tape = Tape::new();
    let h = tape.constant(Array::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()).unwrap();
    let ones = tape.constant(Array::column_vector(vec![1.0, 1.0])).unwrap();
    let same = weight_features(&mut tape, h, ones).unwrap();
    assert_eq!(tape.value(same), tape.value(h));
    let i = tape.constant(Array::column_vector(vec![2.0, 0.5])).unwrap();
    let w = weight_features(&mut tape, h, i).unwrap();
    assert_eq!(tape.value(w).data(), &[2.0, 4.0, 1.5, 2.0]);
}

#[test]
fn interaction_examples() {
    let mut tape = Tape::new();
    let q = tape.constant(Array::row_vector(vec![0.3, -1.0])).unwrap();
    let one = tape.constant(Array::row_vector(vec![0.5, 0.25])).unwrap();
    let r = hypothesis_interaction(&mut tape, q, one).unwrap();
    assert_eq!(tape.value(r.weights).data(), &[1.0]);
    assert_eq!(tape.value(r.o).data(), &[0.5, 0.25]);

    let same = tape.constant(Array::from_rows(&[[0.5, 0.25], [0.5, 0.25]]).unwrap()).unwrap();
    let r = hypothesis_interaction(&mut tape, q, same).unwrap();
    assert_eq!(tape.value(r.weights).data(), &[0.5, 0.5]);
    assert!(tape.value(r.o).max_abs_diff(&Array::row_vector(vec![0.5, 0.25])) < 1e-15);

    // brute force on three distinct rows
    let rows = [[0.1, 0.9], [-0.4, 0.2], [0.7, -0.3]];
    let h = tape.constant(Array::from_rows(&rows).unwrap()).unwrap();
    let r = hypothesis_interaction(&mut tape, q, h).unwrap();
    let qv = [0.3, -1.0];
    let scores: Vec<f64> = rows.iter().map(|row| (row[0] * qv[0] + row[1] * qv[1]) / 2f64.sqrt()).collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    let w: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
    let o = [0, 1].map(|c| (0..3).map(|i| w[i] * rows[i][c]).sum::<f64>());
    assert!(tape.value(r.weights).max_abs_diff(&Array::row_vector(w)) < 1e-12);
    assert!(tape.value(r.o).max_abs_diff(&Array::row_vector(o.to_vec())) < 1e-12);
    assert!((tape.value(r.weights).sum() - 1.0).abs() < 1e-9);
}

#[test]
fn zero_explainer_scores_half() {
    let mut store = ParameterStore::init(&cfg(), 1).unwrap();
    for name in ["exp.w1", "exp.w2"] {
        let a = store.get_mut(name).unwrap();
        *a = Array::zeros(a.rows(), a.cols());
    }
    let mut tape = Tape::new();
    let p = store.bind(&mut tape).unwrap();
    let h = tape.constant(Array::filled(4, 3, 0.7)).unwrap();
    let o = tape.constant(Array::filled(4, 3, -0.2)).unwrap();
    let logits = explanation_logits(&mut tape, &p, h, o).unwrap();
    let s = tape.sigmoid(logits).unwrap();
    assert!(tape.value(s).data().iter().all(|&v| v == 0.5));
    let gold = Array::column_vector(vec![1.0, 0.0, 0.0, 1.0]);
    let l = bce_loss(&mut tape, logits, &gold).unwrap();
    assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-6);

    let big = tape.constant(Array::column_vector(vec![20.0])).unwrap();
    let s = tape.sigmoid(big).unwrap();
    assert!(tape.value(s).item() > 0.999);
}

#[test]
fn bce_value_examples() {
    assert!((bce_value(&[0.5; 4], &[1.0, 0.0, 1.0, 1.0]) - std::f64::consts::LN_2).abs() < 1e-6);
    assert!(bce_value(&[1.0, 0.0], &[1.0, 0.0]) <= 1e-11);
    let scores = [0.95, 0.05, 0.9, 0.1];
    let gold = [1.0, 0.0, 1.0, 0.0];
    let flipped = [0.0, 0.0, 1.0, 0.0];
    assert!(bce_value(&scores, &flipped) > bce_value(&scores, &gold));
}

#[test]
fn selection_examples() {
    let t = ExtractionMode::Threshold(0.5);
    assert_eq!(select(&[0.9, 0.1], t), BTreeSet::from([1]));
    assert_eq!(select(&[0.9, 0.9, 0.1], ExtractionMode::TopK(2)), BTreeSet::from([1, 2]));
    assert_eq!(select(&[0.2, 0.9, 0.9], ExtractionMode::TopK(1)), BTreeSet::from([2]));
    assert_eq!(select(&[0.2, 0.3], ExtractionMode::TopK(5)), BTreeSet::from([1, 2]));
    assert!(ExtractionMode::TopK(0).validate().is_err());
    assert!(ExtractionMode::Threshold(1.0).validate().is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let scores: Vec<f64> = (0..rng.gen_range(1..10)).map(|_| rng.gen()).collect();
        let mut oracle = BTreeSet::new();
        for i in 0..scores.len() {
            if scores[i] >= 0.5 {
                oracle.insert(i + 1);
            }
        }
        assert_eq!(select(&scores, t), oracle);
    }
}

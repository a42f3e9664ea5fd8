use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn classification_examples() {
    let r = classification_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
    assert_eq!(r.macro_avg.f1, 1.0);
    assert_eq!(r.micro_f1, 1.0);
    assert_eq!(r.weighted_f1, 1.0);

    let r = classification_metrics(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
    assert!((r.per_class[0].f1 - 0.5).abs() < 1e-12);
    assert_eq!((r.per_class[1].f1, r.per_class[2].f1), (0.0, 0.0));
    assert!((r.macro_avg.f1 - 0.1667).abs() < 1e-4);
    assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![1, 0, 0], vec![1, 0, 0]]);

    assert!(classification_metrics(&[], &[], 3).is_err());
    assert!(classification_metrics(&[0], &[0, 1], 3).is_err());
    // binary labels
    let r = classification_metrics(&[0, 1, 1, 0], &[0, 1, 0, 0], 2).unwrap();
    assert_eq!(r.micro_f1, 0.75);
}

#[test]
fn classification_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let r = classification_metrics(&preds, &golds, 3).unwrap();
        let mut f1s = [0.0; 3];
        for c in 0..3 {
            let tp = preds.iter().zip(&golds).filter(|(p, g)| **p == c && **g == c).count() as f64;
            let fp = preds.iter().zip(&golds).filter(|(p, g)| **p == c && **g != c).count() as f64;
            let fneg = preds.iter().zip(&golds).filter(|(p, g)| **p != c && **g == c).count() as f64;
            f1s[c] = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
        }
        let macro_f1 = f1s.iter().sum::<f64>() / 3.0;
        assert!((r.macro_avg.f1 - macro_f1).abs() < 1e-12);
        let acc = preds.iter().zip(&golds).filter(|(p, g)| p == g).count() as f64 / n as f64;
        assert!((r.micro_f1 - acc).abs() < 1e-12);
    }
}

#[test]
fn rouge_examples() {
    let a = toks("a b c d");
    for n in [1, 2] {
        assert_eq!(rouge_n(&a, &a, n).unwrap().f1, 1.0);
    }
    assert_eq!(rouge_l(&a, &a).unwrap().f1, 1.0);
    let r = rouge_l(&toks("a c"), &a).unwrap();
    assert!((r.f1 - 0.6667).abs() < 1e-4);
    assert_eq!(r.precision, 1.0);
    assert_eq!(r.recall, 0.5);
    assert_eq!(rouge_n(&toks("x y"), &a, 1).unwrap().f1, 0.0);
    assert!(rouge_l(&a, &[]).is_err());
    assert!(rouge_n(&a, &[], 1).is_err());
    assert_eq!(rouge_n(&["a"], &["a"], 2).unwrap().f1, 1.0);
}

#[test]
fn bleu_examples() {
    let a = toks("the cat sat on the mat");
    assert!((bleu(&a, &a, 4).bleu(4) - 1.0).abs() < 1e-12);
    let s = bleu(&toks("the cat"), &toks("the cat sat"), 4);
    assert!((s.bleu(1) - 0.6065).abs() < 1e-4);
    assert!((s.bleu(1) - (-0.5f64).exp()).abs() < 1e-12);
    assert_eq!(bleu(&toks("x y z"), &a, 4).bleu(4), 0.0);
    assert_eq!(bleu::<&str>(&[], &a, 4).bleu(1), 0.0);
    // short exact match: orders beyond the candidate length are left out
    assert!((bleu(&toks("the cat"), &toks("the cat"), 4).bleu(4) - 1.0).abs() < 1e-12);
}

#[test]
fn agreement_examples() {
    let a = [0, 1, 2, 1, 0];
    assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    // one label everywhere on both sides: degenerate marginals
    assert_eq!(cohen_kappa(&[1, 1], &[1, 1]).unwrap(), 1.0);
    assert!(cohen_kappa(&[1], &[1, 2]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
    let y: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
    assert!(cohen_kappa(&x, &y).unwrap().abs() < 0.05);

    let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
    assert_eq!(jaccard(&s(&[1, 2, 3]), &s(&[2, 3, 4])), 0.5);
    assert_eq!(jaccard(&s(&[1, 2]), &s(&[1, 2])), 1.0);
    assert_eq!(jaccard::<usize>(&s(&[]), &s(&[])), 1.0);

    assert_eq!(span_overlap(&[(0, 10)], &[(0, 10)]), 1.0);
    assert_eq!(span_overlap(&[(0, 10)], &[(5, 15)]), 5.0 / 15.0);
    assert_eq!(span_overlap(&[(0, 4), (2, 6)], &[(10, 12)]), 0.0);
}

#[test]
fn tokenizer() {
    assert_eq!(tokenize("Hello, World! x2"), vec!["hello", "world", "x2"]);
    assert_eq!(tokenize("中文 text"), vec!["中", "文", "text"]);
    // composed and decomposed forms agree
    assert_eq!(tokenize("Cafe\u{301}"), tokenize("Café"));
    assert!(tokenize(" ... ").is_empty());
}

#[test]
fn text_overlap_identity() {
    let t = TextOverlap::of_texts("The cat sat on the mat.", "the cat sat on the mat").unwrap();
    assert_eq!((t.rouge1, t.rouge2, t.rouge_l), (1.0, 1.0, 1.0));
    assert!((t.bleu[3] - 1.0).abs() < 1e-12);
    assert!(TextOverlap::of_texts("x", "...").is_none());
}

fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    // enumerate subsequences of the shorter side
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << s.len()) {
        let sub: Vec<u8> = (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect();
        let mut it = l.iter();
        if sub.iter().all(|c| it.any(|x| x == c)) {
            best = best.max(sub.len());
        }
    }
    best
}

#[test]
fn lcs_matches_brute_force_on_small_alphabet() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let a: Vec<u8> = (0..rng.gen_range(0..=8)).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..rng.gen_range(0..=8)).map(|_| rng.gen_range(0..3)).collect();
        assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
    }
}

proptest! {
    #[test]
    fn scores_bounded_and_rename_invariant(
        a in prop::collection::vec(0u8..5, 1..12),
        b in prop::collection::vec(0u8..5, 1..12),
    ) {
        let rename = |v: &[u8]| v.iter().map(|x| (x + 2) % 5 + 10).collect::<Vec<u8>>();
        for n in [1, 2] {
            let r = rouge_n(&a, &b, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.f1));
            prop_assert_eq!(r, rouge_n(&rename(&a), &rename(&b), n).unwrap());
        }
        let l = rouge_l(&a, &b).unwrap();
        prop_assert_eq!(l, rouge_l(&rename(&a), &rename(&b)).unwrap());
        let s = bleu(&a, &b, 4);
        prop_assert!(s.cumulative.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(s, bleu(&rename(&a), &rename(&b), 4));
    }
}

//! Seeded toy data: random binary discourse trees and small premise groups with
//! planted explanation EDUs. Used by tests, the gradient check and the examples.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::interchange::{
    Document, EduSpan, Explanation, Hypothesis, Instance, Label, RelationLabel, RstTreeSpec,
    TreeTuple,
};

/// Uniformly split binary tree over leaves `1..=n`, tuples emitted top-down.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R, labels: &[RelationLabel]) -> RstTreeSpec {
    fn split<R: Rng>(s: usize, u: usize, rng: &mut R, labels: &[RelationLabel], out: &mut Vec<TreeTuple>) {
        if s == u {
            return;
        }
        let t = rng.gen_range(s..u);
        out.push(TreeTuple {
            s,
            t,
            u,
            r_st: *labels.choose(rng).expect("non-empty label set"),
            r_tu: *labels.choose(rng).expect("non-empty label set"),
        });
        split(s, t, rng, labels, out);
        split(t + 1, u, rng, labels, out);
    }
    let mut tuples = Vec::new();
    if n > 0 {
        split(1, n, rng, labels, &mut tuples);
    }
    RstTreeSpec { tuples }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub groups: usize,
    pub edus_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            groups: 20,
            edus_per_doc: 4,
            seed: 0,
        }
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vel", "dor", "pi", "nex", "qua", "bri", "zo", "fen",
    "gal", "hu", "jor", "mek", "nal", "os", "pra", "sil", "tor", "wy",
];

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn document(sentences: &[Vec<String>], lang: &str, tree: RstTreeSpec) -> Document {
    let mut text = String::new();
    let mut edus = Vec::new();
    for (i, words) in sentences.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        let sentence = format!("{}.", words.join(" "));
        let start = text.chars().count();
        text.push_str(&sentence);
        edus.push(EduSpan {
            index: i + 1,
            start,
            end: start + sentence.chars().count(),
            text: sentence,
        });
    }
    Document {
        lang: lang.to_string(),
        text,
        edus,
        tree,
    }
}

/// `groups` premise groups, each with one hypothesis per label.
///
/// The second document repeats roughly half of the first document's units with a
/// small word swap, so fused graphs get lexical edges. Each hypothesis quotes words
/// from one or two units of each document; those units are its gold explanation.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = &RelationLabel::ALL[..RelationLabel::COUNT - 1];
    let n = cfg.edus_per_doc.max(1);
    let mut out = Vec::with_capacity(cfg.groups * 3);

    for g in 0..cfg.groups {
        let s1: Vec<Vec<String>> = (0..n)
            .map(|_| (0..rng.gen_range(4..=6)).map(|_| word(&mut rng)).collect())
            .collect();
        let s2: Vec<Vec<String>> = s1
            .iter()
            .map(|words| {
                if rng.gen_bool(0.5) {
                    let mut w = words.clone();
                    let i = rng.gen_range(0..w.len() - 1);
                    w.swap(i, i + 1);
                    w
                } else {
                    (0..rng.gen_range(4..=6)).map(|_| word(&mut rng)).collect()
                }
            })
            .collect();
        let doc1 = document(&s1, "en", random_tree(n, &mut rng, labels));
        let doc2 = document(&s2, "de", random_tree(n, &mut rng, labels));

        for label in Label::ALL {
            let pick = |rng: &mut ChaCha8Rng, k: usize| -> BTreeSet<usize> {
                let mut ords: Vec<usize> = (1..=n).collect();
                ords.shuffle(rng);
                ords.into_iter().take(k.min(n)).collect()
            };
            let k1 = rng.gen_range(1..=2);
            let k2 = rng.gen_range(1..=2);
            let gold1 = pick(&mut rng, k1);
            let gold2 = pick(&mut rng, k2);
            let mut words: Vec<String> = Vec::new();
            for &o in &gold1 {
                words.extend(s1[o - 1].iter().cloned());
            }
            for &o in &gold2 {
                words.extend(s2[o - 1].iter().cloned());
            }
            words.push(word(&mut rng));
            out.push(Instance {
                id: format!("g{g:03}-{}", label.name().to_lowercase()),
                group_id: format!("g{g:03}"),
                doc1: doc1.clone(),
                doc2: doc2.clone(),
                hypothesis: Hypothesis {
                    text: format!("{}.", words.join(" ")),
                    lang: "en".into(),
                },
                label,
                explanation: Explanation {
                    doc1: gold1,
                    doc2: gold2,
                },
            });
        }
    }
    out
}

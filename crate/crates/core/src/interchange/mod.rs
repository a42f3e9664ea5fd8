//! On-disk data model: instances with parsed discourse trees, and EDU embeddings.
//!
//! Instances are stored one JSON object per line. Embeddings live in a separate
//! binary container (see [`embeddings`]). When no encoder output is available,
//! [`hash_embed`] provides a deterministic stand-in.

mod dataset;
pub mod embeddings;
mod hashing;
mod relation;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dataset::{load_instances, parse_instance_line, write_instances};
pub use embeddings::{load_embeddings, write_embeddings, EmbeddingTable, InstanceEmbeddings, Slot};
pub use hashing::hash_embed;
pub use relation::RelationLabel;

/// Three-way entailment label. Index order doubles as the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Entailment => "Entailment",
            Label::Neutral => "Neutral",
            Label::Contradiction => "Contradiction",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("label not in {{Entailment, Neutral, Contradiction}}: got {s:?}"))
    }
}

/// Which premise document a span or node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSlot {
    Doc1,
    Doc2,
}

impl DocSlot {
    pub fn name(self) -> &'static str {
        match self {
            DocSlot::Doc1 => "doc1",
            DocSlot::Doc2 => "doc2",
        }
    }
}

/// One elementary discourse unit: a half-open character range of the document text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EduSpan {
    /// 1-based ordinal.
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// One internal node of a binary discourse tree: `[s, t]` and `[t+1, u]` joined
/// under relations `r_st` and `r_tu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeTuple {
    pub s: usize,
    pub t: usize,
    pub u: usize,
    pub r_st: RelationLabel,
    pub r_tu: RelationLabel,
}

impl TreeTuple {
    pub fn span(&self) -> (usize, usize) {
        (self.s, self.u)
    }

    pub fn left(&self) -> (usize, usize) {
        (self.s, self.t)
    }

    pub fn right(&self) -> (usize, usize) {
        (self.t + 1, self.u)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RstTreeSpec {
    pub tuples: Vec<TreeTuple>,
}

impl RstTreeSpec {
    /// Checks that the tuples form one binary tree over leaves `1..=n`.
    pub fn validate(&self, n: usize) -> Result<(), String> {
        if n == 0 {
            return Err("document has no EDUs".into());
        }
        for tp in &self.tuples {
            if tp.s > tp.t {
                return Err(format!("s ≤ t violated in ({}, {}, {})", tp.s, tp.t, tp.u));
            }
            if tp.t >= tp.u {
                return Err(format!("t < u violated in ({}, {}, {})", tp.s, tp.t, tp.u));
            }
            if tp.s < 1 || tp.u > n {
                return Err(format!(
                    "ordinal out of range [1, {n}] in ({}, {}, {})",
                    tp.s, tp.t, tp.u
                ));
            }
        }
        if self.tuples.len() != n - 1 {
            return Err(format!(
                "expected {} tree tuples for {n} EDUs, found {}",
                n - 1,
                self.tuples.len()
            ));
        }
        if n == 1 {
            return Ok(());
        }

        let mut by_span = HashMap::new();
        for (i, tp) in self.tuples.iter().enumerate() {
            if by_span.insert(tp.span(), i).is_some() {
                return Err(format!("span [{}, {}] appears twice", tp.s, tp.u));
            }
        }
        let root = *by_span
            .get(&(1, n))
            .ok_or_else(|| format!("no root tuple spanning [1, {n}]"))?;

        let mut seen = HashSet::new();
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            if !seen.insert(i) {
                return Err("tree tuples contain a cycle".into());
            }
            let tp = self.tuples[i];
            for child in [tp.left(), tp.right()] {
                if child.0 == child.1 {
                    continue;
                }
                let &c = by_span.get(&child).ok_or_else(|| {
                    format!("child span [{}, {}] has no tuple", child.0, child.1)
                })?;
                stack.push(c);
            }
        }
        if seen.len() != self.tuples.len() {
            return Err("tree tuples are not connected to the root".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub lang: String,
    pub text: String,
    pub edus: Vec<EduSpan>,
    pub tree: RstTreeSpec,
}

impl Document {
    pub fn edu_count(&self) -> usize {
        self.edus.len()
    }

    /// Text of the given ordinals, joined in document order.
    pub fn text_of(&self, ordinals: &BTreeSet<usize>) -> String {
        ordinals
            .iter()
            .filter_map(|&o| self.edus.get(o.wrapping_sub(1)))
            .map(|e| e.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypothesis {
    pub text: String,
    pub lang: String,
}

/// Gold explanation EDU ordinals per premise document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Explanation {
    pub doc1: BTreeSet<usize>,
    pub doc2: BTreeSet<usize>,
}

impl Explanation {
    pub fn get(&self, slot: DocSlot) -> &BTreeSet<usize> {
        match slot {
            DocSlot::Doc1 => &self.doc1,
            DocSlot::Doc2 => &self.doc2,
        }
    }
}

/// A premise (two documents) paired with one hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    /// Shared by the three hypotheses written against the same premise.
    pub group_id: String,
    pub doc1: Document,
    pub doc2: Document,
    pub hypothesis: Hypothesis,
    pub label: Label,
    pub explanation: Explanation,
}

impl Instance {
    pub fn doc(&self, slot: DocSlot) -> &Document {
        match slot {
            DocSlot::Doc1 => &self.doc1,
            DocSlot::Doc2 => &self.doc2,
        }
    }

    /// True when both premise documents are identical to `other`'s.
    pub fn same_premise(&self, other: &Instance) -> bool {
        self.doc1 == other.doc1 && self.doc2 == other.doc2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(s: usize, t: usize, u: usize) -> TreeTuple {
        TreeTuple {
            s,
            t,
            u,
            r_st: RelationLabel::Elaboration,
            r_tu: RelationLabel::Elaboration,
        }
    }

    #[test]
    fn label_parsing() {
        assert_eq!("Neutral".parse::<Label>(), Ok(Label::Neutral));
        assert_eq!("contradiction".parse::<Label>(), Ok(Label::Contradiction));
        let err = "Maybe".parse::<Label>().unwrap_err();
        assert!(err.contains("not in {Entailment, Neutral, Contradiction}"));
    }

    #[test]
    fn tree_validation() {
        let tree_of = |t: Vec<TreeTuple>| RstTreeSpec { tuples: t };
        assert!(tree_of(vec![]).validate(1).is_ok());
        assert!(tree_of(vec![tuple(1, 1, 2)]).validate(2).is_ok());
        // right-branching and balanced shapes over 4 leaves
        assert!(tree_of(vec![tuple(1, 1, 4), tuple(2, 2, 4), tuple(3, 3, 4)]).validate(4).is_ok());
        assert!(tree_of(vec![tuple(1, 2, 4), tuple(1, 1, 2), tuple(3, 3, 4)]).validate(4).is_ok());

        let err = tree_of(vec![tuple(3, 2, 4), tuple(1, 1, 2), tuple(1, 2, 4)]).validate(4).unwrap_err();
        assert!(err.contains("s ≤ t violated"), "{err}");
        assert!(tree_of(vec![tuple(1, 2, 2)]).validate(2).unwrap_err().contains("t < u"));
        assert!(tree_of(vec![tuple(1, 1, 5)]).validate(2).unwrap_err().contains("out of range"));
        assert!(tree_of(vec![tuple(1, 1, 2)]).validate(3).unwrap_err().contains("expected 2"));
        // right count, wrong shape: [2,3] is not a child of anything reachable
        let err = tree_of(vec![tuple(1, 1, 3), tuple(1, 1, 2)]).validate(3).unwrap_err();
        assert!(err.contains("child span"), "{err}");
        assert!(tree_of(vec![]).validate(0).is_err());
    }
}

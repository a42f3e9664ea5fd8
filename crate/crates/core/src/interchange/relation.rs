use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rhetorical relation used as an edge type.
///
/// The full vocabulary (19 labels) is used by fused premise graphs; single-document
/// graphs are restricted to [`RelationLabel::SINGLE_DOCUMENT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationLabel {
    Temporal,
    TextualOrganization,
    Joint,
    TopicComment,
    Comparison,
    Condition,
    Contrast,
    Evaluation,
    TopicChange,
    Summary,
    MannerMeans,
    Attribution,
    Cause,
    Background,
    Enablement,
    Explanation,
    SameUnit,
    Elaboration,
    Lexical,
}

impl RelationLabel {
    pub const COUNT: usize = 19;

    pub const ALL: [RelationLabel; Self::COUNT] = [
        RelationLabel::Temporal,
        RelationLabel::TextualOrganization,
        RelationLabel::Joint,
        RelationLabel::TopicComment,
        RelationLabel::Comparison,
        RelationLabel::Condition,
        RelationLabel::Contrast,
        RelationLabel::Evaluation,
        RelationLabel::TopicChange,
        RelationLabel::Summary,
        RelationLabel::MannerMeans,
        RelationLabel::Attribution,
        RelationLabel::Cause,
        RelationLabel::Background,
        RelationLabel::Enablement,
        RelationLabel::Explanation,
        RelationLabel::SameUnit,
        RelationLabel::Elaboration,
        RelationLabel::Lexical,
    ];

    pub const SINGLE_DOCUMENT: [RelationLabel; 9] = [
        RelationLabel::Temporal,
        RelationLabel::Summary,
        RelationLabel::Condition,
        RelationLabel::Contrast,
        RelationLabel::Cause,
        RelationLabel::Background,
        RelationLabel::Elaboration,
        RelationLabel::Explanation,
        RelationLabel::Lexical,
    ];

    /// Position in [`RelationLabel::ALL`]; used to key relation parameters.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationLabel::Temporal => "Temporal",
            RelationLabel::TextualOrganization => "TextualOrganization",
            RelationLabel::Joint => "Joint",
            RelationLabel::TopicComment => "Topic-Comment",
            RelationLabel::Comparison => "Comparison",
            RelationLabel::Condition => "Condition",
            RelationLabel::Contrast => "Contrast",
            RelationLabel::Evaluation => "Evaluation",
            RelationLabel::TopicChange => "Topic-Change",
            RelationLabel::Summary => "Summary",
            RelationLabel::MannerMeans => "Manner-Means",
            RelationLabel::Attribution => "Attribution",
            RelationLabel::Cause => "Cause",
            RelationLabel::Background => "Background",
            RelationLabel::Enablement => "Enablement",
            RelationLabel::Explanation => "Explanation",
            RelationLabel::SameUnit => "Same-Unit",
            RelationLabel::Elaboration => "Elaboration",
            RelationLabel::Lexical => "Lexical",
        }
    }

    pub fn is_single_document(self) -> bool {
        Self::SINGLE_DOCUMENT.contains(&self)
    }

    /// Matches names ignoring case and `-`, `_`, spaces, so `topic_comment`,
    /// `Topic-Comment` and `TopicComment` are the same label.
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Self::ALL.iter().copied().find(|r| {
            r.name()
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .eq(key.chars())
        })
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s).ok_or_else(|| format!("relation label {s:?} not in vocabulary"))
    }
}

impl Serialize for RelationLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RelationLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Divisor applied to the sum over relations in the layer update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationNorm {
    /// Relations present in the graph being processed.
    Present,
    /// The full 19-label vocabulary.
    Global,
}

/// What the triplet loss compares against the premise anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletMode {
    /// Classifier hidden state of (premise ⊕ hypothesis), projected to the graph width.
    PairProjection,
    /// The hypothesis embedding alone, projected to the graph width.
    HypothesisProjection,
}

/// Per-node interaction vector fed to the explanation scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionMode {
    /// One attention-pooled vector shared by every node.
    Global,
    /// Each node's own weighted feature scaled by its attention weight.
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Encoder width of EDU and hypothesis vectors.
    pub d_in: usize,
    pub d_hidden: usize,
    /// Hidden width of the classification and explanation MLPs.
    pub mlp_hidden: usize,
    pub heads_layer1: usize,
    pub heads_layer2: usize,
    pub dropout: f64,
    pub sigma: f64,
    pub theta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub relation_norm: RelationNorm,
    pub triplet_mode: TripletMode,
    pub interaction: InteractionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_in: 1024,
            d_hidden: 256,
            mlp_hidden: 256,
            heads_layer1: 4,
            heads_layer2: 1,
            dropout: 0.1,
            sigma: 1.0,
            theta: 0.5,
            gamma: 0.2,
            lambda: 0.8,
            relation_norm: RelationNorm::Present,
            triplet_mode: TripletMode::PairProjection,
            interaction: InteractionMode::Global,
        }
    }
}

impl ModelConfig {
    /// Default hyperparameters with narrower widths.
    pub fn with_widths(d_in: usize, d_hidden: usize, mlp_hidden: usize) -> Self {
        Self {
            d_in,
            d_hidden,
            mlp_hidden,
            ..Self::default()
        }
    }

    pub fn heads(&self, layer: usize) -> usize {
        if layer == 1 {
            self.heads_layer1
        } else {
            self.heads_layer2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_in", self.d_in),
            ("d_hidden", self.d_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("heads_layer1", self.heads_layer1),
            ("heads_layer2", self.heads_layer2),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("theta", self.theta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    /// Errors naming the first width that differs from `other`.
    pub fn check_compatible(&self, other: &ModelConfig) -> Result<()> {
        let pairs = [
            ("d_in", self.d_in, other.d_in),
            ("d_hidden", self.d_hidden, other.d_hidden),
            ("mlp_hidden", self.mlp_hidden, other.mlp_hidden),
            ("heads_layer1", self.heads_layer1, other.heads_layer1),
            ("heads_layer2", self.heads_layer2, other.heads_layer2),
        ];
        for (name, expected, found) in pairs {
            if expected != found {
                return Err(Error::Dimension {
                    name: name.into(),
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        assert_eq!((c.heads_layer1, c.heads_layer2), (4, 1));
        assert_eq!(c.dropout, 0.1);
        assert_eq!((c.gamma, c.lambda), (0.2, 0.8));
        assert_eq!((c.sigma, c.theta), (1.0, 0.5));
        c.validate().unwrap();
    }

    #[test]
    fn invalid_values() {
        let mut c = ModelConfig::default();
        c.heads_layer1 = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn compatibility_names_the_width() {
        let a = ModelConfig::with_widths(8, 16, 16);
        let b = ModelConfig::with_widths(8, 32, 16);
        match a.check_compatible(&b) {
            Err(Error::Dimension { name, expected, found }) => {
                assert_eq!((name.as_str(), expected, found), ("d_hidden", 16, 32));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

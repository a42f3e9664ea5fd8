//! The relation-aware graph attention network: parameters, layers, heads, losses
//! and the per-group forward pass.

pub mod check;
pub mod config;
pub mod forward;
pub mod heads;
pub mod layer;
pub mod params;

pub use check::{toy_gradient_check, ToyGradCheck};
pub use config::{InteractionMode, ModelConfig, RelationNorm, TripletMode};
pub use forward::{
    forward_group, predict, prepare_group, GroupForward, GroupMasks, HypothesisForward, PreparedGroup,
    PreparedHypothesis,
};
pub use heads::{classify, cross_entropy, pool, total_loss, triplet_loss, ClassifierOutput};
pub use layer::{attention_coeffs, relation_weights, rst_gat_layer, AttentionRecord, GraphInput, LayerOutput};
pub use params::{round_to_f32, BoundParams, ParamLayout, ParameterStore};

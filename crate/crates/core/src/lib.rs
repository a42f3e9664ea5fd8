pub mod autodiff;
pub mod error;
pub mod explain;
pub mod graph;
pub mod interchange;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;

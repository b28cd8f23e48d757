//! Tangent sensitivity of feed-forward ReLU networks.

pub mod bounds;
pub mod checkpoint;
pub mod data;
mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;
pub mod network;
pub mod region_stats;
pub mod sensitivity;
pub mod specfun;
pub mod sweep;
pub mod testing;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use network::{ActivationPattern, BatchTrace, ForwardTrace, NetworkSpec, Params};
pub use trainer::{Optimizer, TrainConfig};

//! Shapley-value explanations for small feed-forward networks.
//!
//! The crate bundles a deterministic inference engine ([`network`]), its
//! moment-matching probabilistic twin ([`probnet`]), the coalition-to-Gaussian
//! input statistics ([`coalition`]), a family of attribution methods
//! ([`attribution`]) including deep approximate Shapley propagation, and a
//! benchmark harness ([`harness`]) that scores methods against exact or
//! sampled ground truth by RMSE and Spearman correlation.

pub mod attribution;
pub mod cli;
pub mod coalition;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod math;
pub mod network;
pub mod probnet;
pub mod seed;
pub mod tensor;

pub use attribution::{AttributionResult, Baseline, Method};
pub use coalition::{CoalitionStats, ScalingMode, SizeSchedule};
pub use error::{Error, Result};
pub use harness::EvalCounter;
pub use math::MomentPair;
pub use network::{Layer, Model};
pub use probnet::GaussianActivation;
pub use tensor::Tensor;

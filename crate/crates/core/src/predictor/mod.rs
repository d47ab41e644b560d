//! Distributional overhead predictor.

pub mod checkpoint;
pub mod infer;
pub mod metrics;
pub mod net;
pub mod train;

pub use checkpoint::Checkpoint;
pub use infer::{from_z, inverse_normal_cdf, to_z, GaussianPrediction};
pub use metrics::{evaluate, Metrics};
pub use net::{forward, loss_and_grad, nll_loss, NetConfig, NetParams};
pub use train::{train, EpochLog, TrainConfig};

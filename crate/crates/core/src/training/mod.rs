//! L2 loss, Adam, the early-stopping training loop and evaluation metrics.

mod adam;
mod loss;
mod metrics;
mod trainer;


pub use adam::{adam_step, AdamConfig, AdamState, Parameters};
pub use loss::l2_loss;
pub use metrics::{compute_metrics, evaluate, persistence_baseline, Metrics};
pub use trainer::{mean_loss, train, EpochRecord, TrainConfig, TrainReport};

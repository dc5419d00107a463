//! Dense ReLU classifier with a softmax head, exact gradients, and the
//! (optionally proximal) local training loop every client runs.

mod checkpoint;
mod model;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use model::{forward, loss_and_gradient, objective, predict_batch, LabeledBatch};
pub use params::{Architecture, Dense, MlpParams};
pub use train::{train_local, train_local_with_loss, BatchSize, LocalOutcome, TrainingConfig, TrainingMode};

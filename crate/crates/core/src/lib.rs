//! Federated training of indoor-localization classifiers over non-IID WiFi
//! RSS fingerprints, with Bayesian fusion of the resulting models.
//!
//! Modules, bottom up:
//!
//! - [`nn`]: dense ReLU network with softmax output, exact gradients, and
//!   (proximal) local training.
//! - [`data`]: UJIIndoorLoc ingestion, room clustering into area labels.
//! - [`partition`]: Dirichlet label-skew partitioning into client datasets.
//! - [`federation`]: FedAvg and FedAMP round loops and their baselines.
//! - [`fusion`]: product-rule fusion of categorical posteriors, MAP decisions.
//! - [`experiment`]: Monte-Carlo harness, sweeps and CSV tables.

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod fusion;
pub mod nn;
pub mod partition;
pub mod seed;

pub use data::{AreaDataset, DataConfig, RssSample};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, MetricsRecord, Strategy};
pub use federation::{ClientState, FederationConfig, SimilarityMatrix};
pub use fusion::{CategoricalPosterior, ClassPrior};
pub use nn::{Architecture, LabeledBatch, MlpParams, TrainingConfig};
pub use partition::{ClientLabelDistribution, GroupSpec};

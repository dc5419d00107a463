#![allow(dead_code, clippy::field_reassign_with_default)]

use std::num::NonZeroUsize;

use fedfuse::data::{prepare, SyntheticFloor};
use fedfuse::nn::Architecture;
use fedfuse::seed;
use fedfuse::{AreaDataset, ExperimentConfig, LabeledBatch, MlpParams, Strategy};
use rand::Rng;

pub fn tiny_floor() -> SyntheticFloor {
    SyntheticFloor {
        rooms: 12,
        access_points: 24,
        samples_per_room: 25,
        other_floor_samples: 5,
        ..SyntheticFloor::default()
    }
}

/// Four areas, three clients, one small hidden layer, a handful of rounds.
pub fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.runs = NonZeroUsize::new(3).unwrap();
    cfg.workers = 2;
    cfg.labels = 4;
    cfg.clients = 3;
    cfg.hidden = vec![8];
    cfg.data.synthetic = Some(tiny_floor());
    cfg.partition.groups = 2;
    cfg.partition.dominant_labels_per_group = 1;
    cfg.federation.rounds = NonZeroUsize::new(3).unwrap();
    cfg.training.epochs = NonZeroUsize::new(1).unwrap();
    cfg.strategies = Strategy::ALL.to_vec();
    cfg
}

pub fn tiny_dataset(cfg: &ExperimentConfig) -> AreaDataset {
    let samples = cfg.data.load_floor().unwrap();
    prepare(&samples, cfg.labels, cfg.data.cluster_seed).unwrap().0
}

/// Random architecture with 1 or 2 hidden layers of width at most 5.
pub fn random_arch<R: Rng>(rng: &mut R) -> Architecture {
    let mut widths = vec![rng.random_range(1..=5)];
    for _ in 0..rng.random_range(1..=2) {
        widths.push(rng.random_range(1..=5));
    }
    widths.push(rng.random_range(2..=4));
    Architecture::new(widths).unwrap()
}

/// Params with all entries (biases included) uniform in `[-1, 1]`.
pub fn random_params<R: Rng>(arch: &Architecture, rng: &mut R) -> MlpParams {
    let values: Vec<f64> = (0..arch.param_count()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    MlpParams::unflatten(&values, arch).unwrap()
}

/// Rows in `[0, 1]` with roughly a third of the entries exactly zero.
pub fn random_batch<R: Rng>(arch: &Architecture, rows: usize, rng: &mut R) -> LabeledBatch {
    let dim = arch.input_dim();
    let features = (0..rows * dim)
        .map(|_| {
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let labels = (0..rows).map(|_| rng.random_range(0..arch.labels())).collect();
    LabeledBatch::new(features, labels, dim, arch.labels()).unwrap()
}

pub fn rng(seed_value: u64) -> seed::Rng {
    seed::rng(seed_value)
}

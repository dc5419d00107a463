//! Server-side orchestration of federated training.
//!
//! Every trainer here shares one seed schedule: client `i` in round `k`
//! trains with seed `derive(training.seed, [LOCAL_TRAIN, i, k])`. That makes
//! the baselines and the federated strategies exactly comparable, e.g.
//! FedAMP with `lambda_tilde = 0` reproduces independent local training bit
//! for bit.

mod amp;
mod round_log;

use std::num::NonZeroUsize;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train_local_with_loss, LabeledBatch, MlpParams, TrainingConfig};
use crate::seed;

pub use self::amp::{amp_prox_centers, amp_similarity, Kernel, SimilarityMatrix};
pub use self::round_log::{write_round_log, RoundLogRow};

/// One participant: its model and its private data.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub params: MlpParams,
    pub data: LabeledBatch,
}

impl ClientState {
    pub fn sample_count(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    /// Communication rounds `K`.
    pub rounds: NonZeroUsize,
    /// Kernel scale.
    pub sigma: f64,
    /// Prox weight of the local subproblem.
    pub lambda_tilde: f64,
    /// Prox-center step size, constant over rounds.
    pub alpha: f64,
    pub kernel: Kernel,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: NonZeroUsize::new(100).expect("non-zero"),
            sigma: 20.0,
            lambda_tilde: 1.0,
            alpha: 1.0,
            kernel: Kernel::GaussianSaturating,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda_tilde >= 0.0 && self.lambda_tilde.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_tilde must be non-negative, got {}",
                self.lambda_tilde
            )));
        }
        Ok(())
    }
}

/// Training seed of client `client` in round `round` (1-based).
pub fn round_seed(training: &TrainingConfig, client: usize, round: usize) -> u64 {
    seed::derive(training.seed, &[seed::tag::LOCAL_TRAIN, client as u64, round as u64])
}

fn check_clients(clients: &[ClientState]) -> Result<()> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Parameter("need at least one client".into()))?;
    for c in clients {
        first.params.ensure_same_architecture(&c.params)?;
    }
    Ok(())
}

fn failure(client: usize, round: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::ClientFailure {
        client,
        round,
        source: Box::new(e),
    }
}

/// Sample-count-weighted mean of `(id, N_i, w_i)`, summed in ascending id order.
fn weighted_mean(mut parts: Vec<(usize, usize, &MlpParams)>) -> Result<MlpParams> {
    parts.sort_by_key(|p| p.0);
    let (_, _, first) = *parts
        .first()
        .ok_or_else(|| Error::Parameter("nothing to aggregate".into()))?;
    let total: usize = parts.iter().map(|p| p.1).sum();
    if total == 0 {
        return Err(Error::InvalidInput("clients hold no samples".into()));
    }
    let mut acc = first.clone();
    acc.scale(parts[0].1 as f64 / total as f64);
    for &(_, n, w) in &parts[1..] {
        acc.add_scaled(n as f64 / total as f64, w)?;
    }
    Ok(acc)
}

/// FedAvg aggregation: `sum_i (N_i / N) w_i`.
pub fn fedavg_aggregate(clients: &[ClientState]) -> Result<MlpParams> {
    check_clients(clients)?;
    weighted_mean(clients.iter().map(|c| (c.id, c.sample_count(), &c.params)).collect())
}

#[derive(Debug, Clone)]
pub struct FedAmpOutcome {
    pub models: Vec<MlpParams>,
    pub log: Vec<RoundLogRow>,
}

/// FedAMP: each round the server mixes `W^{k-1}` into personalized
/// prox-centers `U^k`, then every client solves its prox-regularized local
/// problem starting from its own previous model.
pub fn run_fedamp(clients: &[ClientState], fed: &FederationConfig, training: &TrainingConfig) -> Result<FedAmpOutcome> {
    check_clients(clients)?;
    fed.validate()?;
    let mut models: Vec<MlpParams> = clients.iter().map(|c| c.params.clone()).collect();
    let mut log = Vec::new();
    for round in 1..=fed.rounds.get() {
        let xi = amp_similarity(&models, fed.sigma, fed.alpha, fed.kernel)?;
        let centers = amp_prox_centers(&models, &xi)?;
        let updates = clients
            .par_iter()
            .zip(models.par_iter())
            .zip(centers.par_iter())
            .map(|((c, w), u)| {
                let cfg = training.with_seed(round_seed(training, c.id, round));
                train_local_with_loss(w, &c.data, &cfg, Some(u), fed.lambda_tilde).map_err(failure(c.id, round))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (update, u)) in updates.into_iter().zip(&centers).enumerate() {
            log.push(RoundLogRow {
                round,
                client_id: clients[i].id,
                local_loss: update.final_loss,
                prox_distance: update.params.squared_distance(u)?.sqrt(),
                xi: xi.row(i).to_vec(),
            });
            models[i] = update.params;
        }
    }
    Ok(FedAmpOutcome { models, log })
}

#[derive(Debug, Clone)]
pub struct FedAvgOutcome {
    pub global: MlpParams,
    pub log: Vec<RoundLogRow>,
}

/// FedAvg: every round all clients train from the current global model and
/// the server replaces it with the weighted mean. Starts from the first
/// client's parameters.
pub fn run_fedavg(clients: &[ClientState], fed: &FederationConfig, training: &TrainingConfig) -> Result<FedAvgOutcome> {
    check_clients(clients)?;
    let mut global = clients[0].params.clone();
    let mut log = Vec::new();
    for round in 1..=fed.rounds.get() {
        let updates = clients
            .par_iter()
            .map(|c| {
                let cfg = training.with_seed(round_seed(training, c.id, round));
                train_local_with_loss(&global, &c.data, &cfg, None, 0.0).map_err(failure(c.id, round))
            })
            .collect::<Result<Vec<_>>>()?;
        for (c, update) in clients.iter().zip(&updates) {
            log.push(RoundLogRow {
                round,
                client_id: c.id,
                local_loss: update.final_loss,
                prox_distance: update.params.squared_distance(&global)?.sqrt(),
                xi: Vec::new(),
            });
        }
        global = weighted_mean(
            clients
                .iter()
                .zip(&updates)
                .map(|(c, u)| (c.id, c.sample_count(), &u.params))
                .collect(),
        )?;
    }
    Ok(FedAvgOutcome { global, log })
}

fn train_alone(client: &ClientState, rounds: usize, training: &TrainingConfig) -> Result<MlpParams> {
    let mut w = client.params.clone();
    for round in 1..=rounds {
        let cfg = training.with_seed(round_seed(training, client.id, round));
        w = train_local_with_loss(&w, &client.data, &cfg, None, 0.0)
            .map_err(failure(client.id, round))?
            .params;
    }
    Ok(w)
}

/// Local models: each client trains on its own data for the same number of
/// rounds, never communicating.
pub fn train_lm(clients: &[ClientState], fed: &FederationConfig, training: &TrainingConfig) -> Result<Vec<MlpParams>> {
    check_clients(clients)?;
    clients
        .par_iter()
        .map(|c| train_alone(c, fed.rounds.get(), training))
        .collect()
}

/// Global model on pooled data, trained as a lone client with id 0.
pub fn train_gm(
    init: &MlpParams,
    pooled: &LabeledBatch,
    fed: &FederationConfig,
    training: &TrainingConfig,
) -> Result<MlpParams> {
    let client = ClientState {
        id: 0,
        params: init.clone(),
        data: pooled.clone(),
    };
    train_alone(&client, fed.rounds.get(), training)
}

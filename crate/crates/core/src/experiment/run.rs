//! One Monte-Carlo run: split, partition, train, evaluate.

use std::collections::BTreeMap;

use rand::Rng;

use crate::data::{split_train_test, AreaDataset, Split};
use crate::error::{Error, Result};
use crate::federation::{run_fedamp, run_fedavg, train_gm, train_lm, ClientState, RoundLogRow};
use crate::fusion::{classify_map, fuse_or_average, ClassPrior};
use crate::nn::{predict_batch, LabeledBatch, MlpParams, TrainingConfig};
use crate::partition::{partition, sample_client_distributions, ClientLabelDistribution, Partition};
use crate::seed::{self, tag};

use super::config::{ExperimentConfig, Strategy};

pub fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    seed::derive(cfg.master_seed, &[tag::RUN, run as u64])
}

/// Everything a run trains and evaluates on.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub run: usize,
    pub seed: u64,
    pub split: Split,
    pub distributions: Vec<ClientLabelDistribution>,
    /// Positions into `split.train`.
    pub partition: Partition,
    pub clients: Vec<LabeledBatch>,
    pub test: LabeledBatch,
    /// Global test set resampled to each client's label distribution.
    pub client_tests: Vec<LabeledBatch>,
    pub init: MlpParams,
}

impl RunPlan {
    /// Dataset row indices held by each client.
    pub fn client_sample_indices(&self) -> Vec<Vec<usize>> {
        self.partition
            .clients
            .iter()
            .map(|c| c.iter().map(|&p| self.split.train[p]).collect())
            .collect()
    }
}

pub fn plan_run(cfg: &ExperimentConfig, data: &AreaDataset, run: usize) -> Result<RunPlan> {
    if data.labels() != cfg.labels {
        return Err(Error::Contract(format!(
            "dataset has {} labels, experiment expects {}",
            data.labels(),
            cfg.labels
        )));
    }
    let run_seed = run_seed(cfg, run);
    let split = split_train_test(
        data.batch.labels(),
        cfg.labels,
        cfg.data.test_fraction,
        seed::derive(run_seed, &[tag::SPLIT]),
    )?;
    let train = data.batch.select(&split.train)?;
    let test = data.batch.select(&split.test)?;
    let spec = cfg.partition.group_spec(cfg.clients, cfg.labels)?;
    let distributions = sample_client_distributions(
        &spec,
        cfg.labels,
        &mut seed::derived_rng(run_seed, &[tag::DISTRIBUTION]),
    )?;
    let parts = partition(
        train.labels(),
        cfg.labels,
        &distributions,
        spec.samples_per_client,
        &mut seed::derived_rng(run_seed, &[tag::PARTITION]),
    )?;
    let clients = parts
        .clients
        .iter()
        .map(|idx| train.select(idx))
        .collect::<Result<Vec<_>>>()?;
    let client_tests = client_test_sets(run_seed, &test, &distributions)?;
    let init = MlpParams::init(
        &cfg.architecture(data.feature_dim())?,
        seed::derive(run_seed, &[tag::INIT]),
    );
    Ok(RunPlan {
        run,
        seed: run_seed,
        split,
        distributions,
        partition: parts,
        clients,
        test,
        client_tests,
        init,
    })
}

/// One resampled test set per client, each as large as `test`.
pub fn client_test_sets(
    run_seed: u64,
    test: &LabeledBatch,
    distributions: &[ClientLabelDistribution],
) -> Result<Vec<LabeledBatch>> {
    distributions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = seed::derived_rng(run_seed, &[tag::EVAL, i as u64]);
            client_test_set(test, d.probs(), test.len(), &mut rng)
        })
        .collect()
}

/// Draws `size` rows with replacement: a label from `probs` (restricted to
/// labels present in `test`), then a row of that label uniformly.
pub fn client_test_set<R: Rng + ?Sized>(
    test: &LabeledBatch,
    probs: &[f64],
    size: usize,
    rng: &mut R,
) -> Result<LabeledBatch> {
    if probs.len() != test.num_labels() {
        return Err(Error::Contract(format!(
            "distribution over {} labels, test set has {}",
            probs.len(),
            test.num_labels()
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); test.num_labels()];
    for (i, &l) in test.labels().iter().enumerate() {
        pools[l].push(i);
    }
    let weights: Vec<f64> = probs
        .iter()
        .zip(&pools)
        .map(|(&p, pool)| if pool.is_empty() { 0.0 } else { p })
        .collect();
    let total: f64 = weights.iter().sum();
    if size == 0 || !(total > 0.0) {
        return Err(Error::Evaluation(
            "no test samples carry any of the client's labels".into(),
        ));
    }
    let last = weights.iter().rposition(|&w| w > 0.0).expect("positive total");
    let rows: Vec<usize> = (0..size)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut label = last;
            for (l, &w) in weights.iter().enumerate() {
                if w > 0.0 && u < w {
                    label = l;
                    break;
                }
                u -= w;
            }
            let pool = &pools[label];
            pool[rng.random_range(0..pool.len())]
        })
        .collect();
    test.select(&rows)
}

/// Models produced by one run, keyed by strategy. Fused strategies share the
/// models of their base strategy.
#[derive(Debug, Clone, Default)]
pub struct TrainedRun {
    pub models: BTreeMap<Strategy, Vec<MlpParams>>,
    pub failures: BTreeMap<Strategy, String>,
    pub round_logs: BTreeMap<Strategy, Vec<RoundLogRow>>,
}

pub fn run_training_config(cfg: &ExperimentConfig, plan: &RunPlan) -> TrainingConfig {
    cfg.training
        .with_seed(seed::derive(plan.seed, &[tag::LOCAL_TRAIN, cfg.training.seed]))
}

pub fn train_run(cfg: &ExperimentConfig, plan: &RunPlan) -> TrainedRun {
    let training = run_training_config(cfg, plan);
    let clients: Vec<ClientState> = plan
        .clients
        .iter()
        .enumerate()
        .map(|(id, data)| ClientState {
            id,
            params: plan.init.clone(),
            data: data.clone(),
        })
        .collect();
    let selected = cfg.strategy_set();
    let mut bases: Vec<Strategy> = selected.iter().map(|s| s.base()).collect();
    bases.sort();
    bases.dedup();
    let mut out = TrainedRun::default();
    for base in bases {
        let result = match base {
            Strategy::Gm => {
                let parts: Vec<&LabeledBatch> = plan.clients.iter().collect();
                LabeledBatch::concat(&parts)
                    .and_then(|pooled| train_gm(&plan.init, &pooled, &cfg.federation, &training))
                    .map(|m| vec![m])
            }
            Strategy::Lm => train_lm(&clients, &cfg.federation, &training),
            Strategy::FedAvg => run_fedavg(&clients, &cfg.federation, &training).map(|o| {
                out.round_logs.insert(base, o.log);
                vec![o.global]
            }),
            Strategy::FedAmp => run_fedamp(&clients, &cfg.federation, &training).map(|o| {
                out.round_logs.insert(base, o.log);
                o.models
            }),
            Strategy::LmFused | Strategy::FedAmpFused => unreachable!("fused strategies have a base"),
        };
        for &s in selected.iter().filter(|s| s.base() == base) {
            match &result {
                Ok(models) => {
                    out.models.insert(s, models.clone());
                }
                Err(e) => {
                    log::warn!("run {}: {s} failed: {e}", plan.run);
                    out.failures.insert(s, e.to_string());
                }
            }
        }
    }
    out
}

pub fn accuracy(params: &MlpParams, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let hits = predict_batch(params, batch)?
        .iter()
        .zip(batch.labels())
        .filter(|(p, &y)| classify_map(p) == y)
        .count();
    Ok(hits as f64 / batch.len() as f64)
}

pub fn fused_accuracy(models: &[MlpParams], batch: &LabeledBatch, prior: &ClassPrior) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let per_model = models
        .iter()
        .map(|m| predict_batch(m, batch))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0;
    for (s, &y) in batch.labels().iter().enumerate() {
        let posteriors: Vec<_> = per_model.iter().map(|p| p[s].clone()).collect();
        if classify_map(&fuse_or_average(&posteriors, prior)?) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / batch.len() as f64)
}

/// Single-model and fused strategies are scored on the global test set;
/// personalized strategies average each client model's accuracy on its own
/// client test set.
pub fn evaluate_strategy(
    strategy: Strategy,
    models: &[MlpParams],
    test: &LabeledBatch,
    client_tests: &[LabeledBatch],
    prior: &ClassPrior,
) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::Evaluation(format!("{strategy} has no models")));
    }
    if strategy.is_fused() {
        fused_accuracy(models, test, prior)
    } else if strategy.is_personalized() {
        if models.len() != client_tests.len() {
            return Err(Error::Contract(format!(
                "{} models but {} client test sets",
                models.len(),
                client_tests.len()
            )));
        }
        let total = models
            .iter()
            .zip(client_tests)
            .map(|(m, t)| accuracy(m, t))
            .sum::<Result<f64>>()?;
        Ok(total / models.len() as f64)
    } else {
        if models.len() != 1 {
            return Err(Error::Contract(format!(
                "{strategy} expects one model, got {}",
                models.len()
            )));
        }
        accuracy(&models[0], test)
    }
}

/// Accuracy of every selected strategy, or why it has none.
pub fn evaluate_run(
    cfg: &ExperimentConfig,
    plan: &RunPlan,
    trained: &TrainedRun,
) -> BTreeMap<Strategy, std::result::Result<f64, String>> {
    let prior = ClassPrior::uniform(cfg.labels);
    cfg.strategy_set()
        .into_iter()
        .map(|s| {
            let r = match (trained.models.get(&s), trained.failures.get(&s)) {
                (Some(models), _) => {
                    evaluate_strategy(s, models, &plan.test, &plan.client_tests, &prior).map_err(|e| e.to_string())
                }
                (None, Some(e)) => Err(e.clone()),
                (None, None) => Err("not trained".to_string()),
            };
            (s, r)
        })
        .collect()
}

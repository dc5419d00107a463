//! Repeated runs, metric aggregation and parameter sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{prepare, AreaDataset, RssSample};
use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Strategy, SweepAxis};
use super::run::{evaluate_run, plan_run, train_run};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub strategy: Strategy,
    pub sweep_value: Option<f64>,
    /// Run indices that produced an accuracy, ascending.
    pub runs: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
    /// `(run, error)` for runs without an accuracy.
    pub failures: Vec<(usize, String)>,
}

impl MetricsRecord {
    pub fn new(
        strategy: Strategy,
        sweep_value: Option<f64>,
        outcomes: Vec<(usize, std::result::Result<f64, String>)>,
    ) -> Self {
        let mut runs = Vec::new();
        let mut accuracies = Vec::new();
        let mut failures = Vec::new();
        for (run, r) in outcomes {
            match r {
                Ok(a) => {
                    runs.push(run);
                    accuracies.push(a);
                }
                Err(e) => failures.push((run, e)),
            }
        }
        let (mean, std) = mean_std(&accuracies);
        Self {
            strategy,
            sweep_value,
            runs,
            accuracies,
            mean,
            std,
            failures,
        }
    }
}

/// Mean and sample standard deviation; NaN mean for an empty list.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `R` independent runs on a prepared dataset, executed on `workers` threads.
/// Records come out in canonical strategy order with runs ascending,
/// whatever the schedule.
pub fn run_monte_carlo(
    cfg: &ExperimentConfig,
    data: &AreaDataset,
    sweep_value: Option<f64>,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_run: Vec<BTreeMap<Strategy, std::result::Result<f64, String>>> = pool.install(|| {
        (0..cfg.runs.get())
            .into_par_iter()
            .map(|run| match plan_run(cfg, data, run) {
                Ok(plan) => {
                    let trained = train_run(cfg, &plan);
                    let acc = evaluate_run(cfg, &plan, &trained);
                    log::info!("run {run} done: {}", summarize(&acc));
                    acc
                }
                Err(e) => {
                    log::warn!("run {run} could not be set up: {e}");
                    cfg.strategy_set()
                        .into_iter()
                        .map(|s| (s, Err(e.to_string())))
                        .collect()
                }
            })
            .collect()
    });
    Ok(cfg
        .strategy_set()
        .into_iter()
        .map(|s| {
            let outcomes = per_run
                .iter()
                .enumerate()
                .map(|(run, acc)| (run, acc[&s].clone()))
                .collect();
            MetricsRecord::new(s, sweep_value, outcomes)
        })
        .collect())
}

fn summarize(acc: &BTreeMap<Strategy, std::result::Result<f64, String>>) -> String {
    acc.iter()
        .map(|(s, r)| match r {
            Ok(a) => format!("{s}={a:.4}"),
            Err(_) => format!("{s}=failed"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `mean(numerator) / mean(denominator)` at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub sweep_value: f64,
    pub numerator: Strategy,
    pub denominator: Strategy,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: Option<SweepAxis>,
    pub records: Vec<MetricsRecord>,
    pub rates: Vec<RateRecord>,
}

/// Rates of FedAMP-F against GM and FedAvg at every sweep value where both
/// strategies were evaluated.
pub fn rates(records: &[MetricsRecord], values: &[f64]) -> Vec<RateRecord> {
    let mean_of = |s: Strategy, v: f64| {
        records
            .iter()
            .find(|r| r.strategy == s && r.sweep_value == Some(v))
            .map(|r| r.mean)
    };
    let mut out = Vec::new();
    for &v in values {
        for denominator in [Strategy::Gm, Strategy::FedAvg] {
            if let (Some(a), Some(b)) = (mean_of(Strategy::FedAmpFused, v), mean_of(denominator, v)) {
                out.push(RateRecord {
                    sweep_value: v,
                    numerator: Strategy::FedAmpFused,
                    denominator,
                    rate: a / b,
                });
            }
        }
    }
    out
}

/// Monte-Carlo runs at every sweep value, or once when no sweep is set.
/// Every sweep point reuses the same run seeds.
pub fn sweep(cfg: &ExperimentConfig, samples: &[RssSample]) -> Result<SweepTable> {
    cfg.validate()?;
    let mut prepared: BTreeMap<usize, AreaDataset> = BTreeMap::new();
    let mut dataset_for = |labels: usize| -> Result<AreaDataset> {
        if let Some(d) = prepared.get(&labels) {
            return Ok(d.clone());
        }
        let (d, _) = prepare(samples, labels, cfg.data.cluster_seed)?;
        prepared.insert(labels, d.clone());
        Ok(d)
    };
    let Some(sw) = &cfg.sweep else {
        let data = dataset_for(cfg.labels)?;
        return Ok(SweepTable {
            axis: None,
            records: run_monte_carlo(cfg, &data, None)?,
            rates: Vec::new(),
        });
    };
    let mut records = Vec::new();
    for &v in &sw.values {
        let point = cfg.at(sw.axis, v);
        point.validate()?;
        log::info!("{} = {v}", sw.axis.name());
        let data = dataset_for(point.labels)?;
        records.extend(run_monte_carlo(&point, &data, Some(v))?);
    }
    let rates = match sw.axis {
        SweepAxis::Sigma | SweepAxis::LambdaTilde => rates(&records, &sw.values),
        _ => Vec::new(),
    };
    Ok(SweepTable {
        axis: Some(sw.axis),
        records,
        rates,
    })
}

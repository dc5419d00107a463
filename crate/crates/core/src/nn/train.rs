use std::num::NonZeroUsize;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seed;

use super::model::{accumulate_cross_entropy, ensure_batch_fits, LabeledBatch, Scratch};
use super::params::Dense;
use super::params::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Rows(NonZeroUsize),
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Rows(n) => s.serialize_u64(n.get() as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rows(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rows(n) => usize::try_from(n)
                .ok()
                .and_then(NonZeroUsize::new)
                .map(BatchSize::Rows)
                .ok_or_else(|| serde::de::Error::custom("batch size must be a positive integer")),
            Raw::Word(w) if w.eq_ignore_ascii_case("full") => Ok(BatchSize::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "batch size must be a positive integer or \"full\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Mini-batches over a freshly shuffled order every epoch.
    Stochastic,
    /// One full-batch step per epoch, no randomness.
    DeterministicFullBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: NonZeroUsize,
    pub batch_size: BatchSize,
    pub mode: TrainingMode,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: NonZeroUsize::new(5).expect("non-zero"),
            batch_size: BatchSize::Rows(NonZeroUsize::new(32).expect("non-zero")),
            mode: TrainingMode::Stochastic,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn deterministic(learning_rate: f64, epochs: usize) -> Result<Self> {
        let epochs = NonZeroUsize::new(epochs).ok_or_else(|| Error::Parameter("epochs must be at least 1".into()))?;
        Ok(Self {
            learning_rate,
            epochs,
            batch_size: BatchSize::Full,
            mode: TrainingMode::DeterministicFullBatch,
            seed: 0,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Learning rate must be strictly positive for configured runs.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub params: MlpParams,
    /// Mean per-batch objective over the final epoch.
    pub final_loss: f64,
}

/// Minimizes mean cross-entropy on `data` plus `prox_weight * ||w - prox_center||^2`.
///
/// Each step is a gradient step on the cross-entropy followed by the exact
/// proximal map of the quadratic term, `w <- (w + c u) / (1 + c)` with
/// `c = 2 * lr * prox_weight`. The quadratic is handled implicitly so large
/// prox weights stay stable at any learning rate.
pub fn train_local(
    params: &MlpParams,
    data: &LabeledBatch,
    config: &TrainingConfig,
    prox_center: Option<&MlpParams>,
    prox_weight: f64,
) -> Result<MlpParams> {
    train_local_with_loss(params, data, config, prox_center, prox_weight).map(|o| o.params)
}

pub fn train_local_with_loss(
    params: &MlpParams,
    data: &LabeledBatch,
    config: &TrainingConfig,
    prox_center: Option<&MlpParams>,
    prox_weight: f64,
) -> Result<LocalOutcome> {
    ensure_batch_fits(params, data)?;
    let lr = config.learning_rate;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Parameter(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    if !(prox_weight >= 0.0 && prox_weight.is_finite()) {
        return Err(Error::Parameter(format!(
            "prox weight must be finite and non-negative, got {prox_weight}"
        )));
    }
    let prox = match prox_center {
        Some(center) if prox_weight > 0.0 => {
            params.ensure_same_architecture(center)?;
            Some(center)
        }
        Some(center) => {
            params.ensure_same_architecture(center)?;
            None
        }
        None => None,
    };

    let n = data.len();
    let batch_rows = match (config.mode, config.batch_size) {
        (TrainingMode::DeterministicFullBatch, _) | (_, BatchSize::Full) => n,
        (TrainingMode::Stochastic, BatchSize::Rows(b)) => b.get().min(n),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(config.seed);
    let mut current = params.clone();
    let mut grad = MlpParams::zeros(params.architecture());
    let mut scratch = Scratch::default();
    let mut heard = vec![false; data.dim()];
    let mut columns = Vec::with_capacity(data.dim());
    let pull = 2.0 * lr * prox_weight;
    let mut final_loss = f64::NAN;
    let mut distance = match prox {
        Some(center) => current.squared_distance(center)?,
        None => 0.0,
    };

    for epoch in 1..=config.epochs.get() {
        if config.mode == TrainingMode::Stochastic {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for rows in order.chunks(batch_rows) {
            batch_columns(data, rows, &mut heard, &mut columns);
            zero_grad(&mut grad, &columns);
            let m = rows.len() as f64;
            let mut loss = accumulate_cross_entropy(&current, data, rows, Some(&mut grad), &mut scratch) / m;
            if prox.is_some() {
                loss += prox_weight * distance;
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            weighted += loss * m;
            distance = step(&mut current, &grad, &columns, lr / m, prox.map(|c| (c, pull)));
        }
        final_loss = weighted / n as f64;
        if !current.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
    }
    Ok(LocalOutcome {
        params: current,
        final_loss,
    })
}

/// Sorted first-layer columns that are nonzero in at least one of `rows`.
fn batch_columns(data: &LabeledBatch, rows: &[usize], heard: &mut [bool], columns: &mut Vec<usize>) {
    heard.fill(false);
    for &r in rows {
        for (h, &v) in heard.iter_mut().zip(data.row(r)) {
            *h |= v != 0.0;
        }
    }
    columns.clear();
    columns.extend(heard.iter().enumerate().filter(|(_, h)| **h).map(|(k, _)| k));
}

/// Zeroes the gradient entries the next accumulation can write. First-layer
/// columns outside `columns` are left stale and must not be read.
fn zero_grad(grad: &mut MlpParams, columns: &[usize]) {
    for (t, layer) in grad.layers_mut().iter_mut().enumerate() {
        layer.bias.fill(0.0);
        if t == 0 {
            for row in layer.weights.chunks_mut(layer.inputs) {
                for &k in columns {
                    row[k] = 0.0;
                }
            }
        } else {
            layer.weights.fill(0.0);
        }
    }
}

/// `w -= rate * g`, then the proximal pull `w <- (w + c u) / (1 + c)`.
/// Returns the squared distance to the prox center after the step.
fn step(
    current: &mut MlpParams,
    grad: &MlpParams,
    columns: &[usize],
    rate: f64,
    prox: Option<(&MlpParams, f64)>,
) -> f64 {
    let shrink = prox.map_or(1.0, |(_, pull)| 1.0 / (1.0 + pull));
    let mut distance = 0.0;
    let mut pull_toward = |w: &mut [f64], u: &[f64], pull: f64| {
        for (w, u) in w.iter_mut().zip(u) {
            *w = (*w + pull * u) * shrink;
            distance += (*w - u) * (*w - u);
        }
    };
    let layers = current.layers_mut();
    for (t, (layer, g)) in layers.iter_mut().zip(grad.layers()).enumerate() {
        let Dense {
            inputs, weights, bias, ..
        } = layer;
        if t == 0 {
            for (w, gw) in weights.chunks_mut(*inputs).zip(g.weights.chunks(*inputs)) {
                for &k in columns {
                    w[k] -= rate * gw[k];
                }
            }
        } else {
            for (w, gw) in weights.iter_mut().zip(&g.weights) {
                *w -= rate * gw;
            }
        }
        for (b, gb) in bias.iter_mut().zip(&g.bias) {
            *b -= rate * gb;
        }
        if let Some((center, pull)) = prox {
            let u = &center.layers()[t];
            pull_toward(weights, &u.weights, pull);
            pull_toward(bias, &u.bias, pull);
        }
    }
    distance
}

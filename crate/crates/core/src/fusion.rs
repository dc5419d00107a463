//! Bayesian fusion of per-model class posteriors.
//!
//! With models conditionally independent given the class, the joint
//! posterior over label `j` is proportional to
//! `prod_i p(j | model i) / p0(j)^(M-1)` where `p0` is the class prior. The
//! product is accumulated in log space. Each model term is floored at
//! [`PROB_FLOOR`] first, so a single model reporting an underflowed zero
//! lowers a label's score without vetoing it outright.

use crate::error::{Error, Result};
use crate::nn::{self, MlpParams};

/// Lower bound applied to each model's probability before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector over `L` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPosterior {
    probs: Vec<f64>,
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidInput(format!("{what} has no labels")));
    }
    if let Some(v) = probs.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("{what} has invalid entry {v}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidInput(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl CategoricalPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "posterior")?;
        Ok(Self { probs })
    }

    /// Normalizes non-negative scores to sum to one.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() || scores.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!("cannot normalize scores {scores:?}")));
        }
        let sum: f64 = scores.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("scores sum to zero".into()));
        }
        Ok(Self {
            probs: scores.iter().map(|v| v / sum).collect(),
        })
    }

    pub fn uniform(labels: usize) -> Self {
        Self {
            probs: vec![1.0 / labels as f64; labels],
        }
    }

    /// Output of a softmax, already non-negative and normalized.
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        debug_assert!(check_distribution(&probs, "softmax").is_ok());
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = j;
            }
        }
        best
    }
}

/// Class prior `p0`; every label must have strictly positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrior {
    probs: Vec<f64>,
}

impl ClassPrior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "prior")?;
        if let Some(j) = probs.iter().position(|&p| p <= 0.0) {
            return Err(Error::InvalidInput(format!("prior gives label {j} zero mass")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(labels: usize) -> Self {
        Self {
            probs: vec![1.0 / labels as f64; labels],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Fused posterior of `posteriors` under `prior`.
///
/// Per label, the floored log terms are summed in ascending order, which
/// makes the result exactly independent of the order of `posteriors`.
/// Returns [`Error::DegenerateFusion`] when every label is floored by at
/// least one model; see [`fuse_or_average`] for the fallback.
pub fn fuse(posteriors: &[CategoricalPosterior], prior: &ClassPrior) -> Result<CategoricalPosterior> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::InvalidInput("no posteriors to fuse".into()))?;
    let labels = prior.probs.len();
    if let Some(p) = posteriors.iter().find(|p| p.labels() != labels) {
        return Err(Error::Contract(format!(
            "posterior over {} labels fused under a prior over {labels}",
            p.labels()
        )));
    }
    if posteriors.len() == 1 {
        return Ok(first.clone());
    }

    let extra_prior_powers = (posteriors.len() - 1) as f64;
    let mut terms = Vec::with_capacity(posteriors.len());
    let mut scores = Vec::with_capacity(labels);
    let mut every_label_floored = true;
    for j in 0..labels {
        terms.clear();
        let mut floored = false;
        for p in posteriors {
            let v = p.probs[j];
            if v < PROB_FLOOR {
                floored = true;
            }
            terms.push(v.max(PROB_FLOOR).ln());
        }
        every_label_floored &= floored;
        terms.sort_by(f64::total_cmp);
        let log_product: f64 = terms.iter().sum();
        scores.push(log_product - extra_prior_powers * prior.probs[j].ln());
    }
    if every_label_floored {
        return Err(Error::DegenerateFusion);
    }

    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(CategoricalPosterior { probs: weights })
}

/// Arithmetic mean of the posteriors.
pub fn average(posteriors: &[CategoricalPosterior]) -> Result<CategoricalPosterior> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::InvalidInput("no posteriors to average".into()))?;
    let mut acc = vec![0.0; first.labels()];
    for p in posteriors {
        if p.labels() != acc.len() {
            return Err(Error::Contract("posteriors differ in label count".into()));
        }
        for (a, v) in acc.iter_mut().zip(&p.probs) {
            *a += v;
        }
    }
    CategoricalPosterior::from_scores(&acc)
}

/// [`fuse`], falling back to [`average`] when fusion is degenerate.
pub fn fuse_or_average(posteriors: &[CategoricalPosterior], prior: &ClassPrior) -> Result<CategoricalPosterior> {
    match fuse(posteriors, prior) {
        Err(Error::DegenerateFusion) => {
            log::warn!(
                "degenerate fusion over {} models; averaging posteriors instead",
                posteriors.len()
            );
            average(posteriors)
        }
        other => other,
    }
}

/// MAP label; ties go to the lowest label index.
pub fn classify_map(posterior: &CategoricalPosterior) -> usize {
    posterior.argmax()
}

/// Runs every model on `features`, fuses the posteriors and takes the MAP label.
pub fn predict_fused(
    models: &[MlpParams],
    features: &[f64],
    prior: &ClassPrior,
) -> Result<(CategoricalPosterior, usize)> {
    let posteriors = models
        .iter()
        .map(|m| nn::forward(m, features))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_or_average(&posteriors, prior)?;
    let label = classify_map(&fused);
    Ok((fused, label))
}

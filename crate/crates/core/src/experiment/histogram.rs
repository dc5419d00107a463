//! Target-label posterior mass before and after fusion.

use crate::error::{Error, Result};
use crate::fusion::{fuse_or_average, ClassPrior};
use crate::nn::{predict_batch, LabeledBatch, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorHistogram {
    pub target: usize,
    /// Test rows carrying the target label.
    pub samples: Vec<usize>,
    /// `per_model[i][s]`: model `i`'s probability of the target on sample `s`.
    pub per_model: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
}

impl PosteriorHistogram {
    /// Counts over `bins` equal-width bins on `[0, 1]`: every per-model value
    /// pooled, and every fused value.
    pub fn bin_counts(&self, bins: usize) -> (Vec<usize>, Vec<usize>) {
        let count = |values: &mut dyn Iterator<Item = f64>| {
            let mut c = vec![0; bins];
            for v in values {
                c[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
            c
        };
        let before = count(&mut self.per_model.iter().flatten().copied());
        let after = count(&mut self.fused.iter().copied());
        (before, after)
    }
}

pub fn emit_posterior_histograms(
    models: &[MlpParams],
    test: &LabeledBatch,
    target: usize,
    prior: &ClassPrior,
) -> Result<PosteriorHistogram> {
    if models.is_empty() {
        return Err(Error::Parameter("no models to compare".into()));
    }
    if target >= test.num_labels() {
        return Err(Error::InvalidInput(format!(
            "target label {target} out of range for {} labels",
            test.num_labels()
        )));
    }
    let samples: Vec<usize> = (0..test.len()).filter(|&i| test.labels()[i] == target).collect();
    if samples.is_empty() {
        return Err(Error::EmptySelection(format!("no test samples carry label {target}")));
    }
    let subset = test.select(&samples)?;
    let posteriors = models
        .iter()
        .map(|m| predict_batch(m, &subset))
        .collect::<Result<Vec<_>>>()?;
    let per_model = posteriors
        .iter()
        .map(|ps| ps.iter().map(|p| p.probs()[target]).collect())
        .collect();
    let fused = (0..subset.len())
        .map(|s| {
            let row: Vec<_> = posteriors.iter().map(|ps| ps[s].clone()).collect();
            Ok(fuse_or_average(&row, prior)?.probs()[target])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PosteriorHistogram {
        target,
        samples,
        per_model,
        fused,
    })
}

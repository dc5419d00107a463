use crate::error::{Error, Result};
use crate::fusion::CategoricalPosterior;

use super::params::MlpParams;

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_labels: usize,
}

impl LabeledBatch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, num_labels: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("batch has no samples".into()));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Contract(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_labels) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_labels} labels"
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Contract("rows have differing widths".into()));
        }
        Self::new(rows.concat(), labels, dim, num_labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!(
                    "row {i} out of range for batch of {}",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.num_labels)
    }

    /// Concatenation of several batches of the same shape.
    pub fn concat(parts: &[&LabeledBatch]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim != first.dim || p.num_labels != first.num_labels {
                return Err(Error::Contract("concatenated batches differ in shape".into()));
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        Self::new(features, labels, first.dim, first.num_labels)
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Reusable per-thread buffers for forward and backward passes.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    nonzero: Vec<usize>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    fn prepare(&mut self, params: &MlpParams) {
        let layers = params.layers();
        self.acts.resize_with(layers.len(), Vec::new);
        for (a, layer) in self.acts.iter_mut().zip(layers) {
            a.resize(layer.outputs, 0.0);
        }
    }
}

/// Fills `scratch.acts` with post-ReLU activations for hidden layers and raw
/// logits for the last layer. Zero inputs are skipped in the first layer, which
/// matters for RSS vectors where most access points are not heard.
fn forward_pass(params: &MlpParams, x: &[f64], scratch: &mut Scratch) {
    scratch.prepare(params);
    scratch.nonzero.clear();
    scratch
        .nonzero
        .extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i));

    let layers = params.layers();
    let last = layers.len() - 1;
    for (t, layer) in layers.iter().enumerate() {
        let (before, rest) = scratch.acts.split_at_mut(t);
        let out = &mut rest[0];
        if t == 0 {
            for (o, z) in out.iter_mut().enumerate() {
                let row = layer.row(o);
                let mut acc = layer.bias[o];
                for &k in &scratch.nonzero {
                    acc += row[k] * x[k];
                }
                *z = acc;
            }
        } else {
            let input = &before[t - 1];
            for (o, z) in out.iter_mut().enumerate() {
                let row = layer.row(o);
                let mut acc = layer.bias[o];
                for (w, a) in row.iter().zip(input) {
                    acc += w * a;
                }
                *z = acc;
            }
        }
        if t != last {
            for z in out.iter_mut() {
                if *z < 0.0 {
                    *z = 0.0;
                }
            }
        }
    }
}

/// Numerically stable softmax (max subtraction) in place.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_features(params: &MlpParams, x: &[f64]) -> Result<()> {
    let dim = params.architecture().input_dim();
    if x.len() != dim {
        return Err(Error::Contract(format!(
            "feature vector has {} entries, model expects {dim}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("feature {i} is not finite")));
    }
    Ok(())
}

/// Class posterior of the network for one feature vector.
pub fn forward(params: &MlpParams, features: &[f64]) -> Result<CategoricalPosterior> {
    check_features(params, features)?;
    let mut scratch = Scratch::default();
    Ok(forward_with(params, features, &mut scratch))
}

pub(crate) fn forward_with(params: &MlpParams, x: &[f64], scratch: &mut Scratch) -> CategoricalPosterior {
    forward_pass(params, x, scratch);
    let mut probs = scratch.acts.last().expect("at least one layer").clone();
    softmax_in_place(&mut probs);
    CategoricalPosterior::from_softmax(probs)
}

/// Posteriors for every row of `batch`.
pub fn predict_batch(params: &MlpParams, batch: &LabeledBatch) -> Result<Vec<CategoricalPosterior>> {
    ensure_batch_fits(params, batch)?;
    let mut scratch = Scratch::default();
    (0..batch.len())
        .map(|i| {
            let x = batch.row(i);
            check_features(params, x)?;
            Ok(forward_with(params, x, &mut scratch))
        })
        .collect()
}

pub(crate) fn ensure_batch_fits(params: &MlpParams, batch: &LabeledBatch) -> Result<()> {
    let arch = params.architecture();
    if batch.dim() != arch.input_dim() || batch.num_labels() != arch.labels() {
        return Err(Error::Contract(format!(
            "batch of width {} with {} labels does not fit architecture {:?}",
            batch.dim(),
            batch.num_labels(),
            arch.widths()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `rows` of `batch`; when `grad` is given it
/// receives the mean gradient (overwritten, not accumulated).
pub(crate) fn mean_cross_entropy(
    params: &MlpParams,
    batch: &LabeledBatch,
    rows: &[usize],
    mut grad: Option<&mut MlpParams>,
    scratch: &mut Scratch,
) -> f64 {
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let total = accumulate_cross_entropy(params, batch, rows, grad.as_deref_mut(), scratch);
    let n = rows.len() as f64;
    if let Some(g) = grad {
        g.scale(1.0 / n);
    }
    total / n
}

/// Summed cross-entropy over `rows`; adds the summed gradient into `grad`.
/// First-layer gradient entries are only touched at columns where some row
/// is nonzero.
pub(crate) fn accumulate_cross_entropy(
    params: &MlpParams,
    batch: &LabeledBatch,
    rows: &[usize],
    mut grad: Option<&mut MlpParams>,
    scratch: &mut Scratch,
) -> f64 {
    let layers = params.layers();
    let mut total = 0.0;
    for &r in rows {
        let x = batch.row(r);
        let y = batch.labels()[r];
        forward_pass(params, x, scratch);
        let logits = scratch.acts.last().expect("at least one layer");
        total += log_sum_exp(logits) - logits[y];

        let Some(g) = grad.as_deref_mut() else { continue };
        scratch.delta.clear();
        scratch.delta.extend_from_slice(logits);
        softmax_in_place(&mut scratch.delta);
        scratch.delta[y] -= 1.0;

        for t in (0..layers.len()).rev() {
            let layer = &layers[t];
            let glayer = &mut g.layers_mut()[t];
            for (o, &d) in scratch.delta.iter().enumerate() {
                glayer.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let grow = &mut glayer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                if t == 0 {
                    for &k in &scratch.nonzero {
                        grow[k] += d * x[k];
                    }
                } else {
                    for (gw, a) in grow.iter_mut().zip(&scratch.acts[t - 1]) {
                        *gw += d * a;
                    }
                }
            }
            if t == 0 {
                break;
            }
            scratch.delta_prev.clear();
            scratch.delta_prev.resize(layer.inputs, 0.0);
            for (o, &d) in scratch.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (dp, w) in scratch.delta_prev.iter_mut().zip(layer.row(o)) {
                    *dp += w * d;
                }
            }
            for (dp, a) in scratch.delta_prev.iter_mut().zip(&scratch.acts[t - 1]) {
                if *a <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
        }
    }
    total
}

fn check_prox(params: &MlpParams, prox_center: Option<&MlpParams>, prox_weight: f64) -> Result<()> {
    if !(prox_weight >= 0.0 && prox_weight.is_finite()) {
        return Err(Error::Parameter(format!(
            "prox weight must be finite and non-negative, got {prox_weight}"
        )));
    }
    if let Some(center) = prox_center {
        params.ensure_same_architecture(center)?;
    }
    Ok(())
}

/// Mean cross-entropy over `batch` plus `prox_weight * ||params - prox_center||^2`,
/// and the exact gradient of that objective.
pub fn loss_and_gradient(
    params: &MlpParams,
    batch: &LabeledBatch,
    prox_center: Option<&MlpParams>,
    prox_weight: f64,
) -> Result<(f64, MlpParams)> {
    ensure_batch_fits(params, batch)?;
    check_prox(params, prox_center, prox_weight)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut grad = MlpParams::zeros(params.architecture());
    let mut scratch = Scratch::default();
    let mut loss = mean_cross_entropy(params, batch, &rows, Some(&mut grad), &mut scratch);
    if let Some(center) = prox_center {
        if prox_weight > 0.0 {
            loss += prox_weight * params.squared_distance(center)?;
            for ((g, w), u) in grad.values_mut().zip(params.values()).zip(center.values()) {
                *g += 2.0 * prox_weight * (w - u);
            }
        }
    }
    Ok((loss, grad))
}

/// The objective value alone; see [`loss_and_gradient`].
pub fn objective(
    params: &MlpParams,
    batch: &LabeledBatch,
    prox_center: Option<&MlpParams>,
    prox_weight: f64,
) -> Result<f64> {
    ensure_batch_fits(params, batch)?;
    check_prox(params, prox_center, prox_weight)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut loss = mean_cross_entropy(params, batch, &rows, None, &mut Scratch::default());
    if let Some(center) = prox_center {
        if prox_weight > 0.0 {
            loss += prox_weight * params.squared_distance(center)?;
        }
    }
    Ok(loss)
}

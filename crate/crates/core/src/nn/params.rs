use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Layer widths from input to output: `[input, hidden.., labels]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Parameter(format!(
                "architecture needs an input and an output width, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Parameter(format!(
                "architecture widths must be positive, got {widths:?}"
            )));
        }
        Ok(Self(widths))
    }

    /// `input -> hidden.. -> labels`.
    pub fn with_hidden(input: usize, hidden: &[usize], labels: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(labels);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    pub fn labels(&self) -> usize {
        *self.0.last().expect("non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.0.len() - 1
    }

    /// Total parameter count `d`.
    pub fn param_count(&self) -> usize {
        self.0.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = Error;

    fn try_from(widths: Vec<usize>) -> Result<Self> {
        Self::new(widths)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.0
    }
}

/// One fully connected layer. `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Weights and biases of a dense ReLU network with a softmax head.
///
/// The flattened form is layer-major, each layer contributing its weights
/// (row-major) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    layers: Vec<Dense>,
}

impl MlpParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch.widths().windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut params = Self::zeros(arch);
        for layer in &mut params.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn unflatten(values: &[f64], arch: &Architecture) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Contract(format!(
                "flat vector has {} entries, architecture {:?} needs {}",
                values.len(),
                arch.widths(),
                arch.param_count()
            )));
        }
        let mut params = Self::zeros(arch);
        let mut rest = values;
        for layer in &mut params.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Iterates over all parameters in flattened order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn ensure_same_architecture(&self, other: &MlpParams) -> Result<()> {
        if self.arch != other.arch {
            return Err(Error::Contract(format!(
                "architecture mismatch: {:?} vs {:?}",
                self.arch.widths(),
                other.arch.widths()
            )));
        }
        Ok(())
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layers.iter().flat_map(|l| [&l.weights[..], &l.bias[..]])
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights[..], &mut l.bias[..]])
    }

    /// Squared Euclidean distance between the flattened vectors.
    pub fn squared_distance(&self, other: &MlpParams) -> Result<f64> {
        self.ensure_same_architecture(other)?;
        let mut total = 0.0;
        for (a, b) in self.slices().zip(other.slices()) {
            total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        Ok(total)
    }

    pub fn squared_norm(&self) -> f64 {
        self.slices().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &MlpParams) -> Result<()> {
        self.ensure_same_architecture(other)?;
        for (a, b) in self.slices_mut().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub(crate) fn fill(&mut self, value: f64) {
        for a in self.slices_mut() {
            a.fill(value);
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for a in self.slices_mut() {
            for v in a {
                *v *= factor;
            }
        }
    }
}

//! Attentive message passing: similarity coefficients and prox-centers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpParams;

/// Attention-inducing function `h` of the pairwise regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `h(v) = 1 - exp(-v / sigma)`.
    #[default]
    GaussianSaturating,
}

impl Kernel {
    pub fn value(self, v: f64, sigma: f64) -> f64 {
        match self {
            Kernel::GaussianSaturating => 1.0 - (-v / sigma).exp(),
        }
    }

    /// `h'(v)`.
    pub fn derivative(self, v: f64, sigma: f64) -> f64 {
        match self {
            Kernel::GaussianSaturating => (-v / sigma).exp() / sigma,
        }
    }
}

/// Row-stochastic `M x M` weights; row `i` mixes all client models into
/// client `i`'s prox-center.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    m: usize,
    xi: Vec<f64>,
    /// Step size actually used; below the configured one when clamped.
    pub alpha: f64,
    pub clamped: bool,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Contract("similarity matrix must be square and non-empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            m,
            xi: rows.concat(),
            alpha: f64::NAN,
            clamped: false,
        })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.xi[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xi[i * self.m..(i + 1) * self.m]
    }
}

/// `xi[i][j] = alpha * h'(||w_i - w_j||^2)` off the diagonal, diagonal filling
/// each row to one. If some diagonal would go negative, `alpha` is clamped to
/// the largest value keeping every diagonal non-negative.
pub fn amp_similarity(params: &[MlpParams], sigma: f64, alpha: f64, kernel: Kernel) -> Result<SimilarityMatrix> {
    let m = params.len();
    if m == 0 {
        return Err(Error::Parameter("need at least one client".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma and alpha must be positive, got {sigma} and {alpha}"
        )));
    }
    let mut attention = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = params[i].squared_distance(&params[j])?;
            if !d.is_finite() {
                return Err(Error::InvalidState(format!(
                    "distance between clients {i} and {j} is not finite"
                )));
            }
            let a = kernel.derivative(d, sigma);
            attention[i * m + j] = a;
            attention[j * m + i] = a;
        }
    }
    let row_mass = |i: usize| -> f64 { attention[i * m..(i + 1) * m].iter().sum() };
    let mut used = alpha;
    let mut clamped = false;
    for i in 0..m {
        let mass = row_mass(i);
        if mass > 0.0 && used * mass > 1.0 {
            used = 1.0 / mass;
            clamped = true;
        }
    }
    if clamped {
        log::warn!("alpha {alpha} would make a similarity diagonal negative; clamped to {used}");
    }
    let mut xi = vec![0.0; m * m];
    for i in 0..m {
        let mut off = 0.0;
        for j in 0..m {
            if j != i {
                let v = used * attention[i * m + j];
                xi[i * m + j] = v;
                off += v;
            }
        }
        xi[i * m + i] = (1.0 - off).max(0.0);
    }
    Ok(SimilarityMatrix {
        m,
        xi,
        alpha: used,
        clamped,
    })
}

/// `u_i = sum_j xi[i][j] * w_j`, evaluated as `w_i + sum_{j != i} xi[i][j] (w_j - w_i)`
/// and clamped coordinate-wise to the clients' range, so equal models map to
/// themselves exactly and rounding never leaves the convex hull box.
pub fn amp_prox_centers(params: &[MlpParams], xi: &SimilarityMatrix) -> Result<Vec<MlpParams>> {
    let m = params.len();
    if m == 0 || xi.size() != m {
        return Err(Error::Contract(format!(
            "{m} models mixed with a {}x{} similarity matrix",
            xi.size(),
            xi.size()
        )));
    }
    for p in &params[1..] {
        params[0].ensure_same_architecture(p)?;
    }
    let flats: Vec<Vec<f64>> = params.iter().map(MlpParams::flatten).collect();
    let d = flats[0].len();
    let mut lo = flats[0].clone();
    let mut hi = flats[0].clone();
    for f in &flats[1..] {
        for c in 0..d {
            lo[c] = lo[c].min(f[c]);
            hi[c] = hi[c].max(f[c]);
        }
    }
    let arch = params[0].architecture();
    (0..m)
        .map(|i| {
            let mut u = flats[i].clone();
            for (j, f) in flats.iter().enumerate() {
                let w = xi.get(i, j);
                if j == i || w == 0.0 {
                    continue;
                }
                for c in 0..d {
                    u[c] += w * (f[c] - flats[i][c]);
                }
            }
            for c in 0..d {
                u[c] = u[c].clamp(lo[c], hi[c]);
            }
            MlpParams::unflatten(&u, arch)
        })
        .collect()
}

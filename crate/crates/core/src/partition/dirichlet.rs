//! Gamma and Dirichlet variates.
//!
//! Gamma(shape, 1) uses Marsaglia and Tsang's squeeze method; shapes below
//! one are boosted through `Gamma(a) = Gamma(a + 1) * U^(1/a)`. Normal
//! deviates come from the Marsaglia polar method.

use rand::Rng;

use crate::error::{Error, Result};

/// Standard normal deviate (Marsaglia polar method, one value per call).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gamma(shape, scale = 1) variate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma shape must be positive and finite, got {shape}"
        )));
    }
    if shape < 1.0 {
        let boosted = marsaglia_tsang(rng, shape + 1.0);
        return Ok(boosted * open_unit(rng).powf(1.0 / shape));
    }
    Ok(marsaglia_tsang(rng, shape))
}

fn marsaglia_tsang<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One Dirichlet(`beta`) draw as normalized independent gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, beta: &[f64]) -> Result<Vec<f64>> {
    if beta.is_empty() {
        return Err(Error::Parameter("empty concentration vector".into()));
    }
    if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::Parameter(format!(
            "concentration entries must be positive, got {b}"
        )));
    }
    // Tiny concentrations can underflow every gamma draw to zero; redraw.
    for _ in 0..64 {
        let draws = beta.iter().map(|&b| gamma(rng, b)).collect::<Result<Vec<_>>>()?;
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return Ok(draws.into_iter().map(|g| g / sum).collect());
        }
    }
    Err(Error::Parameter(format!(
        "concentration vector {beta:?} too small to sample"
    )))
}

//! Additive noise models, parameterized in 8-bit units.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    Laplace,
    /// Scaled to unit std but left uncentered.
    Rayleigh,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "awgn" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            "laplace" => Ok(Self::Laplace),
            "rayleigh" => Ok(Self::Rayleigh),
            _ => Err(Error::InvalidParameter(format!("unknown noise kind '{s}'"))),
        }
    }

    /// Mean of one unit-std draw.
    pub fn unit_mean(self) -> f64 {
        match self {
            Self::Rayleigh => (std::f64::consts::PI / (4.0 - std::f64::consts::PI)).sqrt(),
            _ => 0.0,
        }
    }

    /// One draw with unit standard deviation.
    pub fn sample_unit<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            Self::Laplace => {
                // inverse CDF with scale 1/sqrt(2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
            }
            Self::Rayleigh => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let scale = (2.0 / (4.0 - std::f64::consts::PI)).sqrt();
                scale * (-2.0 * u.ln()).sqrt()
            }
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Uniform => "uniform",
            Self::Laplace => "laplace",
            Self::Rayleigh => "rayleigh",
        })
    }
}

/// `sigma` is in 8-bit units; the injected std on `[0, 1]` images is
/// `sigma / 255`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Self {
        Self { kind: NoiseKind::Gaussian, sigma }
    }

    pub fn unit_scale(&self) -> f64 {
        self.sigma / 255.0
    }
}

/// `y = x + (sigma/255) * eps`, `eps` i.i.d. per entry.
pub fn corrupt<R: Rng + ?Sized>(x: &Instance, m: NoiseModel, rng: &mut R) -> Result<Instance> {
    if !(m.sigma >= 0.0 && m.sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {}", m.sigma)));
    }
    if m.sigma == 0.0 {
        return Ok(x.clone());
    }
    let s = m.unit_scale();
    let values = x.values().iter().map(|&v| v + s * m.kind.sample_unit(rng)).collect();
    x.with_values(values)
}

//! Instances, pooled instance statistics and the normalization map.
//!
//! An [`Instance`] is the tensor handed to a denoiser: a training patch or a
//! full test image, stored as a flat channel-major vector. Every statistic in
//! this crate is pooled over all of its entries jointly, never per channel,
//! since the affine action `y -> a*y + b*1` acts identically on all entries.

use std::fmt;

use crate::error::{Error, Result};

/// `(channels, height, width)` of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn gray(height: usize, width: usize) -> Self {
        Self::new(1, height, width)
    }

    /// Number of entries `d = C*H*W`.
    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// One image or patch as a flat vector of doubles.
///
/// Values are nominally in `[0, 1]` but never clamped. Instances are
/// immutable; every operation returns a new one.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    shape: Shape,
    values: Vec<f64>,
}

impl Instance {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidShape(format!("empty shape {shape}")));
        }
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {shape}", shape.len()),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { shape, values })
    }

    /// A one-channel, one-row instance; handy for small vectors.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(Shape::gray(1, n), values)
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same shape, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shape, values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.values[(c * self.shape.height + i) * self.shape.width + j]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `a*y + b*1`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        self.map(|v| a * v + b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.to_string(),
                actual: other.shape.to_string(),
            });
        }
        Ok(())
    }
}

/// Pooled mean and (population) standard deviation of an instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceStats {
    pub mu: f64,
    pub std: f64,
}

/// The image of an instance under [`t_ne`]: zero mean and unit std, or all
/// zeros when the source was constant.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedInstance {
    pub values: Instance,
    pub source: InstanceStats,
}

/// `mu = sum(y)/d`, `std = |y - mu*1| / sqrt(d)`.
///
/// A constant instance yields exactly `std = 0` and `mu` equal to the
/// constant, independent of summation roundoff.
pub fn stats(y: &Instance) -> Result<InstanceStats> {
    if !y.is_finite() {
        return Err(Error::NonFinite);
    }
    let v = y.values();
    let first = v[0];
    if v.iter().all(|&x| x == first) {
        return Ok(InstanceStats { mu: first, std: 0.0 });
    }
    let d = v.len() as f64;
    let mu = v.iter().sum::<f64>() / d;
    let ss: f64 = v.iter().map(|&x| (x - mu) * (x - mu)).sum();
    Ok(InstanceStats { mu, std: (ss / d).sqrt() })
}

/// Normalization map with the constant-instance guardrail.
pub fn t_ne(y: &Instance) -> Result<(NormalizedInstance, InstanceStats)> {
    let s = stats(y)?;
    let values = if s.std > 0.0 {
        y.map(|v| (v - s.mu) / s.std)
    } else {
        y.map(|_| 0.0)
    };
    Ok((NormalizedInstance { values, source: s }, s))
}

/// `s.std * z + s.mu * 1`.
pub fn denormalize(z: &Instance, s: InstanceStats) -> Result<Instance> {
    if !(s.mu.is_finite() && s.std.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(z.map(|v| s.std * v + s.mu))
}

/// [`denormalize`] with an explicit target shape check.
pub fn denormalize_to(z: &Instance, s: InstanceStats, shape: Shape) -> Result<Instance> {
    if z.shape() != shape {
        return Err(Error::ShapeMismatch { expected: shape.to_string(), actual: z.shape().to_string() });
    }
    denormalize(z, s)
}

/// The clean image expressed in the noisy instance's coordinates,
/// `(x - mu(y)*1) / std(y)`; all zeros when `std(y) = 0`.
pub fn matched_target(x: &Instance, s: InstanceStats) -> Instance {
    if s.std > 0.0 {
        x.map(|v| (v - s.mu) / s.std)
    } else {
        x.map(|_| 0.0)
    }
}

/// Input-target distance in normalized coordinates, `|y~ - x~|`.
pub fn delta(y_tilde: &Instance, x_tilde: &Instance) -> Result<f64> {
    y_tilde.check_same_shape(x_tilde)?;
    Ok(y_tilde
        .values()
        .iter()
        .zip(x_tilde.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

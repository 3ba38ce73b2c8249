use super::pad::reflect;
use super::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::Instance;

const SUM_TOL: f64 = 1e-12;

/// Correlate one plane with a `kh x kw` stencil under reflect padding.
fn correlate_plane(plane: &[f64], h: usize, w: usize, kernel: &[f64], kh: usize, kw: usize, out: &mut [f64]) {
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for u in 0..kh {
                let si = reflect(i as isize + u as isize - rh, h);
                let row = &plane[si * w..(si + 1) * w];
                let krow = &kernel[u * kw..(u + 1) * kw];
                for (v, &kv) in krow.iter().enumerate() {
                    acc += kv * row[reflect(j as isize + v as isize - rw, w)];
                }
            }
            out[i * w + j] += acc;
        }
    }
}

/// Per-channel spatial convolution with a unit-sum stencil.
///
/// Linear and fixes constants, hence normalization equivariant.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitSumConv {
    kernel: Vec<f64>,
    kh: usize,
    kw: usize,
}

impl UnitSumConv {
    pub fn new(kernel: Vec<f64>, kh: usize, kw: usize) -> Result<Self> {
        if kh == 0 || kw == 0 || kh.is_multiple_of(2) || kw.is_multiple_of(2) || kernel.len() != kh * kw {
            return Err(Error::InvalidParameter(format!(
                "stencil must be odd-sized, got {kh}x{kw} with {} entries",
                kernel.len()
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let sum: f64 = kernel.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::KernelNotAffine(sum));
        }
        Ok(Self { kernel, kh, kw })
    }

    /// Outer product of a 1-D stencil with itself.
    pub fn separable(taps: &[f64]) -> Result<Self> {
        let n = taps.len();
        let kernel = taps.iter().flat_map(|a| taps.iter().map(move |b| a * b)).collect();
        Self::new(kernel, n, n)
    }

    pub fn delta() -> Self {
        Self { kernel: vec![1.0], kh: 1, kw: 1 }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }
}

impl Backbone for UnitSumConv {
    fn descriptor(&self) -> Descriptor {
        Descriptor { name: format!("unit-sum-conv-{}x{}", self.kh, self.kw), class: EquivarianceClass::Ne }
    }

    fn denoise(&self, y: &Instance) -> Result<Instance> {
        let s = y.shape();
        let mut out = vec![0.0; s.len()];
        for c in 0..s.channels {
            let p = s.plane();
            correlate_plane(y.channel(c), s.height, s.width, &self.kernel, self.kh, self.kw, &mut out[c * p..(c + 1) * p]);
        }
        y.with_values(out)
    }
}

/// Multi-channel convolution weights indexed `(out, in, kh, kw)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineConvKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f64>,
    /// Each output channel's weights sum to one.
    pub constrained: bool,
}

impl AffineConvKernel {
    pub fn new(out_channels: usize, in_channels: usize, kh: usize, kw: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != out_channels * in_channels * kh * kw {
            return Err(Error::InvalidParameter(format!(
                "expected {} weights, got {}",
                out_channels * in_channels * kh * kw,
                weights.len()
            )));
        }
        Ok(Self { out_channels, in_channels, kh, kw, weights, constrained: false })
    }

    fn per_out(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    pub fn out_sums(&self) -> Vec<f64> {
        self.weights.chunks(self.per_out()).map(|c| c.iter().sum()).collect()
    }

    /// Apply to `in_channels` planes of size `h x w`, reflect padding.
    pub fn apply(&self, planes: &[Vec<f64>], h: usize, w: usize) -> Result<Vec<Vec<f64>>> {
        if planes.len() != self.in_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.in_channels),
                actual: format!("{} channels", planes.len()),
            });
        }
        if self.constrained {
            if let Some(s) = self.out_sums().into_iter().find(|s| (s - 1.0).abs() > SUM_TOL) {
                return Err(Error::KernelNotAffine(s));
            }
        }
        let k = self.kh * self.kw;
        let out = (0..self.out_channels)
            .map(|o| {
                let mut acc = vec![0.0; h * w];
                for (c, plane) in planes.iter().enumerate() {
                    let off = (o * self.in_channels + c) * k;
                    correlate_plane(plane, h, w, &self.weights[off..off + k], self.kh, self.kw, &mut acc);
                }
                acc
            })
            .collect();
        Ok(out)
    }
}

/// Orthogonal projection onto `{sum over (in, i, j) of w[out] = 1}` for
/// every output channel.
pub fn affine_constrain(k: &AffineConvKernel) -> AffineConvKernel {
    let n = k.per_out();
    let mut weights = k.weights.clone();
    for chunk in weights.chunks_mut(n) {
        let s: f64 = chunk.iter().sum();
        let shift = (s - 1.0) / n as f64;
        chunk.iter_mut().for_each(|w| *w -= shift);
    }
    AffineConvKernel { weights, constrained: true, ..k.clone() }
}

use super::pad::extend_plane;
use super::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Blockwise orthonormal 2-D DCT with soft thresholding of the AC
/// coefficients.
///
/// The DC coefficient is never touched, so constant shifts pass through
/// exactly, but the fixed threshold breaks scale equivariance.
#[derive(Clone, Debug)]
pub struct DctThreshold {
    patch: usize,
    threshold: f64,
    basis: Vec<f64>,
}

impl DctThreshold {
    pub fn new(patch: usize, threshold: f64) -> Result<Self> {
        if patch < 2 {
            return Err(Error::InvalidParameter(format!("DCT patch size must be >= 2, got {patch}")));
        }
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
        }
        Ok(Self { patch, threshold, basis: dct_matrix(patch) })
    }

    fn process_block(&self, block: &mut [f64], scratch: &mut [f64]) {
        let p = self.patch;
        let c = &self.basis;
        // scratch = C * block * C^T
        transform(c, block, scratch, p, false);
        for (idx, v) in scratch.iter_mut().enumerate() {
            if idx != 0 {
                *v = v.signum() * (v.abs() - self.threshold).max(0.0);
            }
        }
        transform(c, scratch, block, p, true);
    }
}

/// Row `k` holds the `k`-th orthonormal DCT-II basis vector.
fn dct_matrix(p: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * p];
    for k in 0..p {
        let alpha = if k == 0 { (1.0 / p as f64).sqrt() } else { (2.0 / p as f64).sqrt() };
        for n in 0..p {
            c[k * p + n] = alpha * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * p) as f64).cos();
        }
    }
    c
}

/// `out = C x C^T`, or `C^T x C` when `inverse`.
fn transform(c: &[f64], x: &[f64], out: &mut [f64], p: usize, inverse: bool) {
    let at = |r: usize, col: usize| if inverse { c[col * p + r] } else { c[r * p + col] };
    let mut tmp = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            tmp[i * p + j] = (0..p).map(|k| at(i, k) * x[k * p + j]).sum();
        }
    }
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = (0..p).map(|k| tmp[i * p + k] * at(j, k)).sum();
        }
    }
}

impl Backbone for DctThreshold {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            name: format!("dct-threshold-p{}-t{}", self.patch, self.threshold),
            class: if self.threshold == 0.0 { EquivarianceClass::Ne } else { EquivarianceClass::ShiftOnly },
        }
    }

    fn denoise(&self, y: &Instance) -> Result<Instance> {
        let s = y.shape();
        let p = self.patch;
        if s.height < p || s.width < p {
            return Err(Error::TooSmall(format!("{}x{} image with {p}x{p} DCT blocks", s.height, s.width)));
        }
        let (eh, ew) = (s.height.div_ceil(p) * p, s.width.div_ceil(p) * p);
        let mut out = Vec::with_capacity(s.len());
        let mut block = vec![0.0; p * p];
        let mut scratch = vec![0.0; p * p];
        for c in 0..s.channels {
            let mut ext = extend_plane(y.channel(c), s.height, s.width, eh, ew);
            for bi in (0..eh).step_by(p) {
                for bj in (0..ew).step_by(p) {
                    for u in 0..p {
                        block[u * p..(u + 1) * p].copy_from_slice(&ext[(bi + u) * ew + bj..(bi + u) * ew + bj + p]);
                    }
                    self.process_block(&mut block, &mut scratch);
                    for u in 0..p {
                        ext[(bi + u) * ew + bj..(bi + u) * ew + bj + p].copy_from_slice(&block[u * p..(u + 1) * p]);
                    }
                }
            }
            for i in 0..s.height {
                out.extend_from_slice(&ext[i * ew..i * ew + s.width]);
            }
        }
        y.with_values(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Shape;

    fn textured(h: usize, w: usize) -> Instance {
        let v = (0..h * w)
            .map(|k| {
                let (i, j) = ((k / w) as f64, (k % w) as f64);
                0.5 + 0.3 * (0.9 * i).sin() * (1.3 * j + 0.4).cos() + 0.05 * ((k * 7919 % 13) as f64 - 6.0) / 6.0
            })
            .collect();
        Instance::new(Shape::gray(h, w), v).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let p = 6;
        let c = dct_matrix(p);
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = (0..p).map(|n| c[a * p + n] * c[b * p + n]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_threshold_is_identity() {
        let y = textured(13, 10);
        let out = DctThreshold::new(4, 0.0).unwrap().denoise(&y).unwrap();
        for (a, b) in out.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_image_unchanged() {
        let y = Instance::filled(Shape::gray(9, 8), 0.42).unwrap();
        let out = DctThreshold::new(4, 0.3).unwrap().denoise(&y).unwrap();
        for v in out.values() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_is_an_error() {
        let y = textured(3, 8);
        assert!(matches!(DctThreshold::new(4, 0.1).unwrap().denoise(&y), Err(Error::TooSmall(_))));
        assert!(DctThreshold::new(1, 0.1).is_err());
    }

    #[test]
    fn threshold_breaks_scaling_but_not_shifts() {
        let y = textured(16, 16);
        let f = DctThreshold::new(8, 0.05).unwrap();
        let base = f.denoise(&y).unwrap();
        let scaled = f.denoise(&y.affine(2.0, 0.0)).unwrap();
        let gap: f64 = scaled.values().iter().zip(base.values()).map(|(s, b)| (s - 2.0 * b).abs()).sum();
        assert!(gap > 1e-3);
        let shifted = f.denoise(&y.affine(1.0, 0.1)).unwrap();
        for (s, b) in shifted.values().iter().zip(base.values()) {
            assert!((s - b - 0.1).abs() < 1e-12);
        }
    }
}

use super::pad::reflect;
use super::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::{stats, Instance};

/// How the NLM filtering parameter `h` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Fixed `h` in pixel units; shift equivariant only.
    Absolute(f64),
    /// `h = kappa * std(y)`; normalization equivariant.
    Relative(f64),
}

/// Pixelwise non-local means.
#[derive(Clone, Debug)]
pub struct Nlm {
    search_radius: usize,
    patch_radius: usize,
    bandwidth: Bandwidth,
}

impl Nlm {
    pub const DEFAULT_KAPPA: f64 = 0.4;

    pub fn new(search_radius: usize, patch_radius: usize, bandwidth: Bandwidth) -> Result<Self> {
        if search_radius < 1 || patch_radius < 1 {
            return Err(Error::InvalidParameter("NLM radii must be >= 1".into()));
        }
        let h = match bandwidth {
            Bandwidth::Absolute(h) | Bandwidth::Relative(h) => h,
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("NLM bandwidth must be > 0, got {h}")));
        }
        Ok(Self { search_radius, patch_radius, bandwidth })
    }

    pub fn relative(search_radius: usize, patch_radius: usize) -> Result<Self> {
        Self::new(search_radius, patch_radius, Bandwidth::Relative(Self::DEFAULT_KAPPA))
    }

    fn filter_plane(&self, plane: &[f64], h: usize, w: usize, bw: f64, out: &mut Vec<f64>) {
        let rs = self.search_radius as isize;
        let rp = self.patch_radius as isize;
        let pad = rs + rp;
        let (ph, pw) = (h + 2 * pad as usize, w + 2 * pad as usize);
        let mut ext = Vec::with_capacity(ph * pw);
        for i in 0..ph as isize {
            let si = reflect(i - pad, h);
            for j in 0..pw as isize {
                ext.push(plane[si * w + reflect(j - pad, w)]);
            }
        }
        let at = |i: isize, j: isize| ext[(i + pad) as usize * pw + (j + pad) as usize];
        let inv_h2 = 1.0 / (bw * bw);
        let patch_n = ((2 * rp + 1) * (2 * rp + 1)) as f64;
        for i in 0..h as isize {
            for j in 0..w as isize {
                let (mut num, mut den) = (0.0, 0.0);
                for di in -rs..=rs {
                    for dj in -rs..=rs {
                        let mut d2 = 0.0;
                        for u in -rp..=rp {
                            for v in -rp..=rp {
                                let diff = at(i + u, j + v) - at(i + di + u, j + dj + v);
                                d2 += diff * diff;
                            }
                        }
                        let wgt = (-(d2 / patch_n) * inv_h2).exp();
                        num += wgt * at(i + di, j + dj);
                        den += wgt;
                    }
                }
                out.push(num / den);
            }
        }
    }
}

impl Backbone for Nlm {
    fn descriptor(&self) -> Descriptor {
        let (tag, class) = match self.bandwidth {
            Bandwidth::Absolute(h) => (format!("h{h}"), EquivarianceClass::ShiftOnly),
            Bandwidth::Relative(k) => (format!("k{k}"), EquivarianceClass::Ne),
        };
        Descriptor { name: format!("nlm-s{}-p{}-{tag}", self.search_radius, self.patch_radius), class }
    }

    fn denoise(&self, y: &Instance) -> Result<Instance> {
        let st = stats(y)?;
        if st.std == 0.0 {
            return Ok(y.clone());
        }
        let bw = match self.bandwidth {
            Bandwidth::Absolute(h) => h,
            Bandwidth::Relative(k) => k * st.std,
        };
        let s = y.shape();
        let mut out = Vec::with_capacity(s.len());
        for c in 0..s.channels {
            self.filter_plane(y.channel(c), s.height, s.width, bw, &mut out);
        }
        y.with_values(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Shape;

    fn probe() -> Instance {
        let v = (0..12 * 11).map(|k| 0.3 + 0.4 * ((k * 2654435761usize % 1000) as f64 / 1000.0)).collect();
        Instance::new(Shape::gray(12, 11), v).unwrap()
    }

    #[test]
    fn constant_image_unchanged() {
        let y = Instance::filled(Shape::gray(6, 6), 0.8).unwrap();
        for bw in [Bandwidth::Absolute(0.1), Bandwidth::Relative(0.4)] {
            assert_eq!(Nlm::new(2, 1, bw).unwrap().denoise(&y).unwrap(), y);
        }
    }

    #[test]
    fn relative_bandwidth_is_ne() {
        let y = probe();
        let f = Nlm::relative(2, 1).unwrap();
        let base = f.denoise(&y).unwrap();
        let moved = f.denoise(&y.affine(1.7, -0.3)).unwrap();
        for (m, b) in moved.values().iter().zip(base.values()) {
            assert!((m - (1.7 * b - 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn absolute_bandwidth_is_shift_but_not_scale_equivariant() {
        let y = probe();
        let f = Nlm::new(2, 1, Bandwidth::Absolute(0.1)).unwrap();
        let base = f.denoise(&y).unwrap();
        let shifted = f.denoise(&y.affine(1.0, 0.1)).unwrap();
        for (m, b) in shifted.values().iter().zip(base.values()) {
            assert!((m - b - 0.1).abs() < 1e-12);
        }
        let scaled = f.denoise(&y.affine(2.0, 0.0)).unwrap();
        let gap = scaled.values().iter().zip(base.values()).map(|(s, b)| (s - 2.0 * b).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-3);
    }

    #[test]
    fn rejects_bad_radii() {
        assert!(Nlm::new(0, 1, Bandwidth::Relative(0.4)).is_err());
        assert!(Nlm::new(1, 1, Bandwidth::Absolute(0.0)).is_err());
    }
}

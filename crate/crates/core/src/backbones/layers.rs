//! Layer primitives that keep normalization equivariance layer by layer:
//! affine-constrained convolutions, sort pooling and affine residuals.

use rand::Rng;

use super::conv::{affine_constrain, AffineConvKernel};
use super::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Elementwise `(min(u, v), max(u, v))`.
pub fn sortpool(u: &Instance, v: &Instance) -> Result<(Instance, Instance)> {
    Ok((u.zip_with(v, f64::min)?, u.zip_with(v, f64::max)?))
}

/// `(1 - t) * l1 + t * l2`; `t` is not restricted to `[0, 1]`.
pub fn affine_residual(l1: &Instance, l2: &Instance, t: f64) -> Result<Instance> {
    l1.zip_with(l2, |a, b| (1.0 - t) * a + t * b)
}

fn sort_stage(planes: &mut [Vec<f64>], rotation: usize) {
    let n = planes.len();
    planes.rotate_left(rotation % n);
    for pair in planes.chunks_mut(2) {
        if let [u, v] = pair {
            for (a, b) in u.iter_mut().zip(v.iter_mut()) {
                let (lo, hi) = if *a <= *b { (*a, *b) } else { (*b, *a) };
                *a = lo;
                *b = hi;
            }
        }
    }
}

/// A small architecturally-NE network:
/// conv -> sortpool -> conv -> sortpool -> conv, closed by an affine
/// residual with the input. Sort stage `k` pairs adjacent channels after
/// rotating the channel list left by `k`.
#[derive(Clone, Debug)]
pub struct NeArchStack {
    convs: Vec<AffineConvKernel>,
    mix: f64,
}

impl NeArchStack {
    pub fn new(convs: Vec<AffineConvKernel>, mix: f64) -> Result<Self> {
        if convs.is_empty() {
            return Err(Error::InvalidParameter("stack needs at least one convolution".into()));
        }
        for w in convs.windows(2) {
            if w[0].out_channels != w[1].in_channels {
                return Err(Error::InvalidParameter("convolution channel counts do not chain".into()));
            }
        }
        if convs.iter().any(|k| !k.constrained) {
            return Err(Error::InvalidParameter("stack convolutions must be affine-constrained".into()));
        }
        Ok(Self { convs, mix })
    }

    /// Random 3-layer stack with `features` (even) hidden channels.
    pub fn random<R: Rng + ?Sized>(channels: usize, features: usize, rng: &mut R) -> Result<Self> {
        if features < 2 || !features.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("features must be even and >= 2, got {features}")));
        }
        let dims = [(channels, features), (features, features), (features, channels)];
        let convs = dims
            .iter()
            .map(|&(i, o)| {
                let w = (0..o * i * 9).map(|_| rng.random_range(-0.5..0.5)).collect();
                AffineConvKernel::new(o, i, 3, 3, w).map(|k| affine_constrain(&k))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(convs, rng.random_range(0.2..0.8))
    }
}

impl Backbone for NeArchStack {
    fn descriptor(&self) -> Descriptor {
        Descriptor { name: format!("ne-arch-{}layer", self.convs.len()), class: EquivarianceClass::Ne }
    }

    fn denoise(&self, y: &Instance) -> Result<Instance> {
        let s = y.shape();
        let mut planes: Vec<Vec<f64>> = (0..s.channels).map(|c| y.channel(c).to_vec()).collect();
        let last = self.convs.len() - 1;
        for (k, conv) in self.convs.iter().enumerate() {
            planes = conv.apply(&planes, s.height, s.width)?;
            if k != last {
                sort_stage(&mut planes, k);
            }
        }
        if planes.len() != s.channels {
            return Err(Error::NotShapePreserving(format!("stack emits {} channels for {s}", planes.len())));
        }
        let out = Instance::new(s, planes.concat())?;
        affine_residual(y, &out, self.mix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::instance::Shape;

    fn inst(v: &[f64]) -> Instance {
        Instance::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn sortpool_examples() {
        let (lo, hi) = sortpool(&inst(&[3.0]), &inst(&[1.0])).unwrap();
        assert_eq!((lo.values()[0], hi.values()[0]), (1.0, 3.0));
        let (lo, hi) = sortpool(&inst(&[0.4, -2.0]), &inst(&[0.4, -2.0])).unwrap();
        assert_eq!(lo, hi);
        assert!(sortpool(&inst(&[1.0]), &inst(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn sortpool_commutes_with_increasing_affine_maps() {
        let u = inst(&[0.1, 0.9, -0.3, 0.5]);
        let v = inst(&[0.2, 0.4, -0.6, 0.5]);
        let (lo, hi) = sortpool(&u, &v).unwrap();
        let (lo2, hi2) = sortpool(&u.affine(2.5, -0.7), &v.affine(2.5, -0.7)).unwrap();
        assert_eq!(lo2, lo.affine(2.5, -0.7));
        assert_eq!(hi2, hi.affine(2.5, -0.7));
    }

    #[test]
    fn affine_residual_examples() {
        let (l1, l2) = (inst(&[0.0, 2.0]), inst(&[2.0, 0.0]));
        assert_eq!(affine_residual(&l1, &l2, 0.0).unwrap(), l1);
        assert_eq!(affine_residual(&l1, &l2, 1.0).unwrap(), l2);
        assert_eq!(affine_residual(&l1, &l2, 0.5).unwrap().values(), &[1.0, 1.0]);
        assert!(affine_residual(&l1, &inst(&[1.0]), 0.5).is_err());
    }

    #[test]
    fn sort_stage_rotates_pairing() {
        let mut planes = vec![vec![4.0], vec![3.0], vec![2.0], vec![1.0]];
        sort_stage(&mut planes, 1);
        // rotated: [3, 2, 1, 4] -> pairs (3,2) (1,4)
        assert_eq!(planes, vec![vec![2.0], vec![3.0], vec![1.0], vec![4.0]]);
    }

    #[test]
    fn stack_rejects_unconstrained_kernels() {
        let k = AffineConvKernel::new(1, 1, 1, 1, vec![2.0]).unwrap();
        assert!(NeArchStack::new(vec![k], 0.5).is_err());
    }

    #[test]
    fn random_stack_fixes_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NeArchStack::random(1, 4, &mut rng).unwrap();
        let y = Instance::filled(Shape::gray(5, 6), -0.25).unwrap();
        for v in net.denoise(&y).unwrap().values() {
            assert!((v + 0.25).abs() < 1e-13);
        }
    }
}

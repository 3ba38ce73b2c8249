//! Denoising backbones.
//!
//! A backbone is any shape-preserving map on instances. The wrapper makes
//! any of them normalization equivariant; the classical ones here also carry
//! an honest label of the equivariance they have on their own.

mod conv;
mod dct;
mod layers;
mod mlp;
mod nlm;
pub(crate) mod pad;

use std::fmt;
use std::sync::Arc;

pub use conv::{affine_constrain, AffineConvKernel, UnitSumConv};
pub use dct::DctThreshold;
pub use layers::{affine_residual, sortpool, NeArchStack};
pub use mlp::{Activation, MlpGrads, MlpTape, PatchMlp, PatchMlpParams, Prediction};
pub use nlm::{Bandwidth, Nlm};

use crate::error::Result;
use crate::instance::Instance;

/// Equivariance a backbone has on its own, without any wrapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquivarianceClass {
    /// `f(a*y + b*1) = a*f(y) + b*1` for all `a > 0`.
    Ne,
    /// Scale equivariant, not shift equivariant.
    SeOnly,
    /// Shift equivariant, not scale equivariant.
    ShiftOnly,
    None,
    Unknown,
}

impl fmt::Display for EquivarianceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Ne => "NE",
            Self::SeOnly => "SE-only",
            Self::ShiftOnly => "shift-only",
            Self::None => "none",
            Self::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Descriptor {
    pub name: String,
    pub class: EquivarianceClass,
}

/// A deterministic, shape-preserving instance map.
pub trait Backbone: Send + Sync {
    fn descriptor(&self) -> Descriptor;

    fn denoise(&self, z: &Instance) -> Result<Instance>;
}

impl<B: Backbone + ?Sized> Backbone for Arc<B> {
    fn descriptor(&self) -> Descriptor {
        (**self).descriptor()
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        (**self).denoise(z)
    }
}

impl<B: Backbone + ?Sized> Backbone for &B {
    fn descriptor(&self) -> Descriptor {
        (**self).descriptor()
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        (**self).denoise(z)
    }
}

/// Adapts a closure into a backbone.
pub struct FnBackbone<F> {
    descriptor: Descriptor,
    f: F,
}

impl<F> FnBackbone<F>
where
    F: Fn(&Instance) -> Result<Instance> + Send + Sync,
{
    pub fn new(name: impl Into<String>, class: EquivarianceClass, f: F) -> Self {
        Self { descriptor: Descriptor { name: name.into(), class }, f }
    }
}

impl<F> Backbone for FnBackbone<F>
where
    F: Fn(&Instance) -> Result<Instance> + Send + Sync,
{
    fn descriptor(&self) -> Descriptor {
        self.descriptor.clone()
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        (self.f)(z)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Backbone for Identity {
    fn descriptor(&self) -> Descriptor {
        Descriptor { name: "identity".into(), class: EquivarianceClass::Ne }
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        Ok(z.clone())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl Backbone for Zero {
    fn descriptor(&self) -> Descriptor {
        Descriptor { name: "zero".into(), class: EquivarianceClass::SeOnly }
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        Ok(z.map(|_| 0.0))
    }
}

/// One instance of every backbone kind, with fixed seeded parameters where
/// they are random.
pub fn catalog(seed: u64) -> Result<Vec<Arc<dyn Backbone>>> {
    let mut rng = crate::rng::substream(seed, 0xBB);
    Ok(vec![
        Arc::new(Identity),
        Arc::new(Zero),
        Arc::new(UnitSumConv::separable(&[0.25, 0.5, 0.25])?),
        Arc::new(DctThreshold::new(8, 0.05)?),
        Arc::new(Nlm::relative(2, 1)?),
        Arc::new(Nlm::new(2, 1, Bandwidth::Absolute(0.1))?),
        Arc::new(NeArchStack::random(1, 4, &mut rng)?),
        Arc::new(PatchMlpParams::init(8, 64, Prediction::Residual, Activation::Relu, &mut rng)?),
        Arc::new(PatchMlpParams::init(4, 16, Prediction::Clean, Activation::Linear, &mut rng)?),
    ])
}

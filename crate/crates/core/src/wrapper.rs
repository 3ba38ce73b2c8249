//! The normalize -> backbone -> denormalize combinator and its variants.

use std::sync::Arc;

use crate::backbones::{Backbone, Descriptor, EquivarianceClass};
use crate::error::{Error, Result};
use crate::instance::{stats, Instance};

/// Stabilizer added to `std(y)` unless set to zero.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Denominator offset of [`ne_defect`].
pub const DEFECT_TAU: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WrapMode {
    /// The bare backbone.
    None,
    /// `std(y) g(T(y)) + mu(y) 1`.
    Direct,
    /// `y - std(y) h(T(y))`, the backbone predicting the normalized noise.
    Residual,
    /// `g(T(y))`, normalized at the input only.
    InputOnly,
}

impl WrapMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "direct" => Ok(Self::Direct),
            "residual" => Ok(Self::Residual),
            "input-only" | "inputonly" => Ok(Self::InputOnly),
            _ => Err(Error::InvalidParameter(format!("unknown wrap mode '{s}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Direct => "direct",
            Self::Residual => "residual",
            Self::InputOnly => "input-only",
        }
    }
}

/// Instance statistics as used by a wrapper, with the normalized input.
#[derive(Clone, Debug)]
pub struct Normalization {
    pub z: Instance,
    pub mu: f64,
    /// `std(y) + eps`, or `std(y)` when `eps = 0`.
    pub scale: f64,
    /// `std(y) == 0`: the guardrail branch is active and `z` is all zeros.
    pub constant: bool,
}

/// Normalize `y` with `std_eps(y) = std(y) + eps`. Constant instances map to
/// zeros regardless of `eps`.
pub fn normalize(y: &Instance, epsilon: f64) -> Result<Normalization> {
    let s = stats(y)?;
    if s.std == 0.0 {
        return Ok(Normalization { z: y.map(|_| 0.0), mu: s.mu, scale: 0.0, constant: true });
    }
    let scale = if epsilon > 0.0 { s.std + epsilon } else { s.std };
    Ok(Normalization { z: y.map(|v| (v - s.mu) / scale), mu: s.mu, scale, constant: false })
}

fn checked(backbone: &dyn Backbone, z: &Instance) -> Result<Instance> {
    let out = backbone.denoise(z)?;
    if out.shape() != z.shape() {
        return Err(Error::NotShapePreserving(format!(
            "{} maps {} to {}",
            backbone.descriptor().name,
            z.shape(),
            out.shape()
        )));
    }
    Ok(out)
}

/// A backbone plus the way it is wrapped.
#[derive(Clone)]
pub struct WrappedDenoiser {
    backbone: Arc<dyn Backbone>,
    mode: WrapMode,
    epsilon: f64,
}

impl WrappedDenoiser {
    pub fn new(backbone: Arc<dyn Backbone>, mode: WrapMode, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self { backbone, mode, epsilon })
    }

    /// The ideal wrapper (`eps = 0`).
    pub fn exact(backbone: Arc<dyn Backbone>, mode: WrapMode) -> Self {
        Self { backbone, mode, epsilon: 0.0 }
    }

    pub fn stabilized(backbone: Arc<dyn Backbone>, mode: WrapMode) -> Self {
        Self { backbone, mode, epsilon: DEFAULT_EPSILON }
    }

    pub fn mode(&self) -> WrapMode {
        self.mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn backbone(&self) -> &Arc<dyn Backbone> {
        &self.backbone
    }

    pub fn apply(&self, y: &Instance) -> Result<Instance> {
        let g = self.backbone.as_ref();
        match self.mode {
            WrapMode::None => checked(g, y),
            WrapMode::Direct => {
                let n = normalize(y, self.epsilon)?;
                if n.constant {
                    return Ok(y.map(|_| n.mu));
                }
                Ok(checked(g, &n.z)?.map(|v| n.scale * v + n.mu))
            }
            WrapMode::Residual => {
                let n = normalize(y, self.epsilon)?;
                if n.constant {
                    return Ok(y.clone());
                }
                let r = checked(g, &n.z)?;
                y.zip_with(&r, |yv, rv| yv - n.scale * rv)
            }
            WrapMode::InputOnly => {
                let n = normalize(y, self.epsilon)?;
                checked(g, &n.z)
            }
        }
    }
}

impl Backbone for WrappedDenoiser {
    fn descriptor(&self) -> Descriptor {
        let inner = self.backbone.descriptor();
        let class = match self.mode {
            WrapMode::None => inner.class,
            WrapMode::Direct | WrapMode::Residual if self.epsilon == 0.0 => EquivarianceClass::Ne,
            // approximately NE away from near-constant inputs
            WrapMode::Direct | WrapMode::Residual => EquivarianceClass::Unknown,
            WrapMode::InputOnly => EquivarianceClass::None,
        };
        Descriptor { name: format!("{}[{}]", inner.name, self.mode.as_str()), class }
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        self.apply(z)
    }
}

/// `z -> z - h(z)`: Direct-wrapping the result equals Residual-wrapping `h`.
pub struct ResidualAsDirect {
    inner: Arc<dyn Backbone>,
}

pub fn residual_to_direct(h: Arc<dyn Backbone>) -> ResidualAsDirect {
    ResidualAsDirect { inner: h }
}

impl Backbone for ResidualAsDirect {
    fn descriptor(&self) -> Descriptor {
        let inner = self.inner.descriptor();
        Descriptor { name: format!("id-minus-{}", inner.name), class: EquivarianceClass::Unknown }
    }

    fn denoise(&self, z: &Instance) -> Result<Instance> {
        let r = checked(self.inner.as_ref(), z)?;
        z.sub(&r)
    }
}

/// `|f(a y + b 1) - (a f(y) + b 1)| / (|a f(y) + b 1| + tau)`.
pub fn ne_defect(f: &dyn Backbone, y: &Instance, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(Error::InvalidParameter(format!("scale a must be > 0, got {a}")));
    }
    let moved = f.denoise(&y.affine(a, b))?;
    let expected = f.denoise(y)?.affine(a, b);
    let num = moved.sub(&expected)?.norm();
    Ok(num / (expected.norm() + DEFECT_TAU))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::{FnBackbone, Identity, Zero};

    fn inst(v: &[f64]) -> Instance {
        Instance::from_vec(v.to_vec()).unwrap()
    }

    fn wild() -> Arc<dyn Backbone> {
        Arc::new(FnBackbone::new("wild", EquivarianceClass::None, |z: &Instance| {
            Ok(z.map(|v| (3.0 * v).sin() + 0.2 * v * v - 0.7))
        }))
    }

    #[test]
    fn direct_examples() {
        let y = inst(&[1.0, 3.0]);
        let w = WrappedDenoiser::exact(Arc::new(Identity), WrapMode::Direct);
        assert_eq!(w.apply(&y).unwrap().values(), &[1.0, 3.0]);
        let w = WrappedDenoiser::exact(Arc::new(Zero), WrapMode::Direct);
        assert_eq!(w.apply(&y).unwrap().values(), &[2.0, 2.0]);
        let w = WrappedDenoiser::exact(wild(), WrapMode::Direct);
        assert_eq!(w.apply(&inst(&[5.0, 5.0])).unwrap().values(), &[5.0, 5.0]);
    }

    #[test]
    fn constant_guardrail_is_independent_of_epsilon() {
        let y = inst(&[0.3, 0.3, 0.3]);
        for mode in [WrapMode::Direct, WrapMode::Residual] {
            let w = WrappedDenoiser::stabilized(wild(), mode);
            assert_eq!(w.apply(&y).unwrap(), y);
        }
    }

    #[test]
    fn residual_mode_predicts_normalized_noise() {
        let y = inst(&[1.0, 3.0]);
        let w = WrappedDenoiser::exact(Arc::new(Identity), WrapMode::Residual);
        // h = id: y - std * (y - mu)/std = mu
        assert_eq!(w.apply(&y).unwrap().values(), &[2.0, 2.0]);
        let w = WrappedDenoiser::exact(Arc::new(Zero), WrapMode::Residual);
        assert_eq!(w.apply(&y).unwrap(), y);
    }

    #[test]
    fn input_only_discards_scale() {
        let w = WrappedDenoiser::exact(Arc::new(Identity), WrapMode::InputOnly);
        let y = inst(&[1.0, 3.0]);
        assert_eq!(w.apply(&y).unwrap().values(), &[-1.0, 1.0]);
        assert!(ne_defect(&w, &y, 2.0, 0.0).unwrap() > 0.1);
    }

    #[test]
    fn shape_changing_backbone_is_rejected() {
        let bad: Arc<dyn Backbone> =
            Arc::new(FnBackbone::new("bad", EquivarianceClass::Unknown, |_z: &Instance| Instance::from_vec(vec![0.0])));
        let y = inst(&[1.0, 2.0, 4.0]);
        for mode in [WrapMode::None, WrapMode::Direct, WrapMode::Residual, WrapMode::InputOnly] {
            let err = WrappedDenoiser::exact(bad.clone(), mode).apply(&y).unwrap_err();
            assert!(err.to_string().starts_with("backbone not shape-preserving"));
        }
    }

    #[test]
    fn residual_to_direct_examples() {
        let y = inst(&[0.2, -0.4, 1.3]);
        assert_eq!(residual_to_direct(Arc::new(Zero)).denoise(&y).unwrap(), y);
        assert!(residual_to_direct(Arc::new(Identity)).denoise(&y).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn defect_of_identity_and_wrapped_maps() {
        let y = inst(&[0.1, 0.7, 0.4, 0.9]);
        assert_eq!(ne_defect(&Identity, &y, 1.3, -0.2).unwrap(), 0.0);
        let w = WrappedDenoiser::exact(wild(), WrapMode::Direct);
        assert!(ne_defect(&w, &y, 1.3, -0.2).unwrap() < 1e-10);
        assert!(ne_defect(&w, &y, 0.0, 0.0).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [WrapMode::None, WrapMode::Direct, WrapMode::Residual, WrapMode::InputOnly] {
            assert_eq!(WrapMode::parse(m.as_str()).unwrap(), m);
        }
        assert!(WrapMode::parse("sideways").is_err());
    }
}

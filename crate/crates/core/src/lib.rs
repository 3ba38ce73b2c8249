//! Normalization-equivariant denoising.
//!
//! The core object is the wrapper `f(y) = std(y) g(T(y)) + mu(y) 1`, which
//! makes any backbone `g` commute with global contrast and brightness
//! changes `y -> a y + b 1`. Around it sit classical and trainable
//! backbones, a small training stack, normalized-coordinate diagnostics and
//! a projected iterative sampler for inpainting.

pub mod analysis;
pub mod backbones;
pub mod corpus;
pub mod error;
pub mod instance;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod sampler;
pub mod training;
pub mod wrapper;

pub use error::{Error, Result};
pub use instance::{Instance, InstanceStats, Shape};

//! Denoiser-residual sampler for linear inverse problems, with the
//! unconstrained residual-stopped special case and random inpainting masks.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::backbones::Backbone;
use crate::error::{Error, Result};
use crate::instance::{Instance, Shape};
use crate::metrics::psnr;

/// Diagonal 0/1 projector; `true` marks an observed entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projector {
    mask: Vec<bool>,
}

impl Projector {
    pub fn new(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    /// `P = 0`.
    pub fn none(d: usize) -> Self {
        Self { mask: vec![false; d] }
    }

    /// `P = I`.
    pub fn all(d: usize) -> Self {
        Self { mask: vec![true; d] }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `P x`, with exact zeros off the mask.
    pub fn project(&self, x: &Instance) -> Result<Instance> {
        self.check(x)?;
        x.with_values(x.values().iter().zip(&self.mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect())
    }

    fn check(&self, x: &Instance) -> Result<()> {
        if x.len() != self.mask.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", self.mask.len()),
                actual: format!("{} entries", x.len()),
            });
        }
        Ok(())
    }
}

/// Uniformly random mask with exactly `floor(fraction * d)` observed entries.
pub fn make_inpainting_mask<R: Rng + ?Sized>(shape: Shape, fraction: f64, rng: &mut R) -> Result<Projector> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("observed fraction must be in [0, 1], got {fraction}")));
    }
    let d = shape.len();
    let k = ((fraction * d as f64).floor() as usize).min(d);
    let mut mask = vec![false; d];
    for i in sample(rng, d, k) {
        mask[i] = true;
    }
    Ok(Projector { mask })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub sigma0: f64,
    pub sigma_l: f64,
    pub h0: f64,
    pub beta: f64,
    pub t_max: usize,
}

impl SamplerConfig {
    /// Random-inpainting parameters.
    pub fn inpainting() -> Self {
        Self { sigma0: 1.0, sigma_l: 0.01, h0: 0.01, beta: 0.01, t_max: 1000 }
    }

    /// Unconstrained, noise-free updates stopped at `sigma_hat <= 1/255`.
    pub fn residual_stop() -> Self {
        Self { sigma0: 1.0, sigma_l: 1.0 / 255.0, h0: 0.01, beta: 1.0, t_max: 1000 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma0 > self.sigma_l
            && self.sigma_l > 0.0
            && self.h0 > 0.0
            && self.h0 <= 1.0
            && (0.0..=1.0).contains(&self.beta);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "sampler needs sigma0 > sigmaL > 0, 0 < h0 <= 1, 0 <= beta <= 1; got {self:?}"
            )));
        }
        Ok(())
    }

    /// `h_t = h0 t / (1 + h0 (t - 1))`.
    pub fn step_size(&self, t: usize) -> f64 {
        let t = t as f64;
        self.h0 * t / (1.0 + self.h0 * (t - 1.0))
    }

    /// `sqrt((1 - beta h)^2 - (1 - h)^2) * sigma_hat`.
    pub fn injection(&self, h: f64, sigma_hat: f64) -> Result<f64> {
        let g2 = (1.0 - self.beta * h).powi(2) - (1.0 - h).powi(2);
        if g2 < 0.0 {
            return Err(Error::InvalidParameter(format!("negative noise injection {g2} at h = {h}")));
        }
        Ok(g2.sqrt() * sigma_hat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    Budget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Threshold => "threshold",
            Self::Budget => "budget",
        }
    }
}

/// One executed update `y_{t-1} -> y_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub sigma_hat: f64,
    pub h: f64,
    pub gamma: f64,
    /// PSNR of `x_c + (I - P) y_t` when the clean image is known.
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// PSNR of the projected initial state.
    pub initial_psnr: Option<f64>,
    pub stop: StopReason,
    /// `sigma_hat` of the check that ended the run (NaN on budget exhaustion).
    pub final_sigma_hat: f64,
    pub y: Instance,
    pub xhat: Instance,
}

impl Trajectory {
    pub fn final_psnr(&self) -> Option<f64> {
        self.steps.last().map_or(self.initial_psnr, |s| s.psnr)
    }

    /// Best PSNR over all states, the initial one included.
    pub fn best_psnr(&self) -> Option<f64> {
        let init = self.initial_psnr?;
        Some(self.steps.iter().filter_map(|s| s.psnr).fold(init, f64::max))
    }
}

fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `x_c + (I - P) y`; observed entries are copied from `x_c` bitwise.
fn assemble(mask: &[bool], xc: &[f64], y: &[f64]) -> Vec<f64> {
    mask.iter().zip(xc).zip(y).map(|((&m, &c), &v)| if m { c } else { c + v }).collect()
}

/// Run the sampler from the standard initialization
/// `y_0 = x_c + 0.5 (I - P) 1 + sigma0 z`.
pub fn sampler_run<R: Rng + ?Sized>(
    d: &dyn Backbone,
    p: &Projector,
    x_c: &Instance,
    cfg: &SamplerConfig,
    rng: &mut R,
    clean: Option<&Instance>,
) -> Result<Trajectory> {
    cfg.validate()?;
    p.check(x_c)?;
    let z = gaussian(x_c.len(), rng);
    let y0: Vec<f64> = p
        .mask
        .iter()
        .zip(x_c.values())
        .zip(&z)
        .map(|((&m, &c), &n)| c + if m { 0.0 } else { 0.5 } + cfg.sigma0 * n)
        .collect();
    run_from(d, p, x_c, x_c.with_values(y0)?, cfg, rng, clean)
}

/// The iteration proper, from a given `y_0`.
pub fn run_from<R: Rng + ?Sized>(
    d: &dyn Backbone,
    p: &Projector,
    x_c: &Instance,
    y0: Instance,
    cfg: &SamplerConfig,
    rng: &mut R,
    clean: Option<&Instance>,
) -> Result<Trajectory> {
    cfg.validate()?;
    p.check(x_c)?;
    x_c.check_same_shape(&y0)?;
    if let Some(c) = clean {
        c.check_same_shape(x_c)?;
    }
    let dim = x_c.len();
    let root_d = (dim as f64).sqrt();
    let mask = p.mask();
    let xc = x_c.values();
    let score = |y: &[f64]| -> Result<Option<f64>> {
        clean.map(|c| psnr(&x_c.with_values(assemble(mask, xc, y))?, c, 1.0)).transpose()
    };
    let mut y = y0;
    let initial_psnr = score(y.values())?;
    let mut steps = Vec::new();
    let mut stop = StopReason::Budget;
    let mut final_sigma_hat = f64::NAN;
    for t in 1..=cfg.t_max {
        let dy = d.denoise(&y)?;
        x_c.check_same_shape(&dy)?;
        let u: Vec<f64> = mask
            .iter()
            .zip(dy.values().iter().zip(y.values()))
            .zip(xc)
            .map(|((&m, (&dv, &yv)), &c)| if m { c - yv } else { dv - yv })
            .collect();
        let sigma_hat = u.iter().map(|v| v * v).sum::<f64>().sqrt() / root_d;
        if !sigma_hat.is_finite() {
            return Err(Error::Divergence { step: t, reason: "non-finite sampler state".into() });
        }
        if sigma_hat <= cfg.sigma_l {
            stop = StopReason::Threshold;
            final_sigma_hat = sigma_hat;
            break;
        }
        let h = cfg.step_size(t);
        let gamma = cfg.injection(h, sigma_hat)?;
        let next: Vec<f64> = if gamma > 0.0 {
            let z = gaussian(dim, rng);
            y.values().iter().zip(&u).zip(&z).map(|((&yv, &uv), &zv)| yv + h * uv + gamma * zv).collect()
        } else {
            y.values().iter().zip(&u).map(|(&yv, &uv)| yv + h * uv).collect()
        };
        y = y.with_values(next)?;
        steps.push(StepRecord { t, sigma_hat, h, gamma, psnr: score(y.values())? });
    }
    let xhat = x_c.with_values(assemble(mask, xc, y.values()))?;
    Ok(Trajectory { steps, initial_psnr, stop, final_sigma_hat, y, xhat })
}

/// Summary of a residual-stopped denoising run.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub input_psnr: f64,
    /// PSNR of `D(y_0)`.
    pub one_pass_psnr: f64,
    pub best_psnr: f64,
    pub final_psnr: f64,
    pub trajectory: Trajectory,
}

impl StabilityReport {
    /// `final - best`; zero for a trajectory that never overshoots.
    pub fn gap(&self) -> f64 {
        self.final_psnr - self.best_psnr
    }
}

/// Unconstrained run (`P = 0`, `x_c = 0`) from a given noisy `y0`, scored
/// against `clean`. `cfg.beta` must be 1.
pub fn residual_stop_denoise(d: &dyn Backbone, y0: &Instance, clean: &Instance, cfg: &SamplerConfig) -> Result<StabilityReport> {
    if cfg.beta != 1.0 {
        return Err(Error::InvalidParameter(format!("residual-stopped denoising needs beta = 1, got {}", cfg.beta)));
    }
    let zero = y0.map(|_| 0.0);
    let p = Projector::none(y0.len());
    // gamma = 0 throughout, so the stream is never drawn from
    let mut rng = crate::rng::substream(0, 0);
    let traj = run_from(d, &p, &zero, y0.clone(), cfg, &mut rng, Some(clean))?;
    let one_pass_psnr = psnr(&d.denoise(y0)?, clean, 1.0)?;
    let best_psnr = traj.best_psnr().unwrap_or(f64::NAN);
    let final_psnr = traj.final_psnr().unwrap_or(f64::NAN);
    Ok(StabilityReport { input_psnr: psnr(y0, clean, 1.0)?, one_pass_psnr, best_psnr, final_psnr, trajectory: traj })
}

/// Inpainting evaluation of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintReport {
    /// PSNR of `P x` (unobserved entries left at zero).
    pub observed_psnr: f64,
    /// PSNR of `x_c + (I - P) D(y_0)`.
    pub one_pass_psnr: f64,
    pub final_psnr: f64,
    pub trajectory: Trajectory,
}

pub fn inpaint<R: Rng + ?Sized>(
    d: &dyn Backbone,
    clean: &Instance,
    p: &Projector,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<InpaintReport> {
    let x_c = p.project(clean)?;
    let z = gaussian(x_c.len(), rng);
    let y0: Vec<f64> = p
        .mask()
        .iter()
        .zip(x_c.values())
        .zip(&z)
        .map(|((&m, &c), &n)| c + if m { 0.0 } else { 0.5 } + cfg.sigma0 * n)
        .collect();
    let y0 = x_c.with_values(y0)?;
    let one = d.denoise(&y0)?;
    let one_pass = x_c.with_values(assemble(p.mask(), x_c.values(), one.values()))?;
    let one_pass_psnr = psnr(&one_pass, clean, 1.0)?;
    let traj = run_from(d, p, &x_c, y0, cfg, rng, Some(clean))?;
    Ok(InpaintReport {
        observed_psnr: psnr(&x_c, clean, 1.0)?,
        one_pass_psnr,
        final_psnr: psnr(&traj.xhat, clean, 1.0)?,
        trajectory: traj,
    })
}

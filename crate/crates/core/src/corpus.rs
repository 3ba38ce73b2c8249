//! Seeded synthetic image corpus and random patch extraction.
//!
//! Four families: Gaussian random fields at three smoothness scales,
//! piecewise-constant Voronoi mosaics, linear ramps and sinusoidal gratings.
//! Every image gets its own contrast, drawn log-uniformly, so that patch
//! contrast spans two orders of magnitude.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::backbones::pad::reflect;
use crate::error::{Error, Result};
use crate::instance::{stats, Instance, Shape};
use crate::rng::task_stream;

const GRF_SCALES: [f64; 3] = [1.0, 2.5, 6.0];
const CONTRAST_RANGE: (f64, f64) = (0.005, 0.3);
/// Images are kept inside `[MARGIN, 1 - MARGIN]`.
const MARGIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImageKind {
    /// Gaussian random field; the index selects the smoothness scale.
    Grf(usize),
    Voronoi,
    /// `mean + slope * (cos(angle) * (j - cj) + sin(angle) * (i - ci))`.
    Gradient { mean: f64, slope: f64, angle: f64 },
    Grating,
}

impl ImageKind {
    pub fn label(&self) -> String {
        match self {
            Self::Grf(s) => format!("grf{s}"),
            Self::Voronoi => "voronoi".into(),
            Self::Gradient { .. } => "gradient".into(),
            Self::Grating => "grating".into(),
        }
    }
}

/// Relative weights of the four families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixWeights {
    pub grf: f64,
    pub voronoi: f64,
    pub gradient: f64,
    pub grating: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        Self { grf: 0.4, voronoi: 0.3, gradient: 0.1, grating: 0.2 }
    }
}

impl MixWeights {
    pub fn only_gradients() -> Self {
        Self { grf: 0.0, voronoi: 0.0, gradient: 1.0, grating: 0.0 }
    }

    /// Parse `grf,voronoi,gradient,grating`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad mix weight '{t}'"))))
            .collect::<Result<_>>()?;
        let [grf, voronoi, gradient, grating] = v[..] else {
            return Err(Error::InvalidParameter("mix needs four weights: grf,voronoi,gradient,grating".into()));
        };
        let m = Self { grf, voronoi, gradient, grating };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let w = [self.grf, self.voronoi, self.gradient, self.grating];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter("mix weights must be >= 0 with a positive sum".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub image: Instance,
    pub kind: ImageKind,
    /// Pooled std of the generated (unquantized) image.
    pub sigma_x: f64,
}

/// Closed-form std of a linear ramp sampled on an `h x w` grid.
pub fn ramp_sigma(slope: f64, angle: f64, h: usize, w: usize) -> f64 {
    let var_j = ((w * w) as f64 - 1.0) / 12.0;
    let var_i = ((h * h) as f64 - 1.0) / 12.0;
    slope.abs() * (angle.cos().powi(2) * var_j + angle.sin().powi(2) * var_i).sqrt()
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

fn blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] =
                taps.iter().enumerate().map(|(k, t)| t * plane[i * w + reflect(j as isize + k as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] =
                taps.iter().enumerate().map(|(k, t)| t * tmp[reflect(i as isize + k as isize - r, h) * w + j]).sum();
        }
    }
    out
}

/// Zero-mean, unit-std copy (all zeros when constant).
fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if s > 0.0 { (*x - m) / s } else { 0.0 };
    }
}

/// `mean + contrast * pattern`, shrinking the contrast to stay in range.
fn place<R: Rng + ?Sized>(pattern: &[f64], rng: &mut R) -> Vec<f64> {
    let mean = rng.random_range(0.25..0.75);
    let (lo, hi) = CONTRAST_RANGE;
    let mut c = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let pmax = pattern.iter().cloned().fold(0.0, f64::max);
    let pmin = pattern.iter().cloned().fold(0.0, f64::min);
    if pmax > 0.0 {
        c = c.min((1.0 - MARGIN - mean) / pmax);
    }
    if pmin < 0.0 {
        c = c.min((mean - MARGIN) / -pmin);
    }
    pattern.iter().map(|p| mean + c * p).collect()
}

fn pick_kind<R: Rng + ?Sized>(mix: &MixWeights, rng: &mut R) -> usize {
    let w = [mix.grf, mix.voronoi, mix.gradient, mix.grating];
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, wk) in w.iter().enumerate() {
        if u < *wk {
            return k;
        }
        u -= wk;
    }
    w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

pub fn generate_image<R: Rng + ?Sized>(size: usize, mix: &MixWeights, rng: &mut R) -> Result<SyntheticImage> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("image size must be >= 2, got {size}")));
    }
    mix.validate()?;
    let (h, w) = (size, size);
    let (values, kind) = match pick_kind(mix, rng) {
        0 => {
            let scale = rng.random_range(0..GRF_SCALES.len());
            let white: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
            let mut p = blur(&white, h, w, GRF_SCALES[scale]);
            standardize(&mut p);
            (place(&p, rng), ImageKind::Grf(scale))
        }
        1 => {
            let k = rng.random_range(4..=24);
            let seeds: Vec<(f64, f64, f64)> =
                (0..k).map(|_| (rng.random::<f64>() * h as f64, rng.random::<f64>() * w as f64, rng.random())).collect();
            let mut p: Vec<f64> = (0..h * w)
                .map(|idx| {
                    let (i, j) = ((idx / w) as f64, (idx % w) as f64);
                    seeds
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.0 - i).powi(2) + (a.1 - j).powi(2);
                            let db = (b.0 - i).powi(2) + (b.1 - j).powi(2);
                            da.total_cmp(&db)
                        })
                        .map(|s| s.2)
                        .unwrap()
                })
                .collect();
            standardize(&mut p);
            (place(&p, rng), ImageKind::Voronoi)
        }
        2 => {
            let angle = rng.random_range(0.0..2.0 * PI);
            let mean: f64 = rng.random_range(0.3..0.7);
            let (ci, cj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
            let reach = angle.cos().abs() * cj + angle.sin().abs() * ci;
            let (lo, hi) = CONTRAST_RANGE;
            let target = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
            let sx = ramp_sigma(1.0, angle, h, w);
            let max_slope = (mean.min(1.0 - mean) - MARGIN) / reach;
            let slope = (target / sx).min(max_slope);
            let v = (0..h * w)
                .map(|idx| {
                    let (i, j) = ((idx / w) as f64, (idx % w) as f64);
                    mean + slope * (angle.cos() * (j - cj) + angle.sin() * (i - ci))
                })
                .collect();
            (v, ImageKind::Gradient { mean, slope, angle })
        }
        _ => {
            let angle = rng.random_range(0.0..PI);
            let freq = rng.random_range(0.02..0.25);
            let phase = rng.random_range(0.0..2.0 * PI);
            let p: Vec<f64> = (0..h * w)
                .map(|idx| {
                    let (i, j) = ((idx / w) as f64, (idx % w) as f64);
                    (2.0 * PI * freq * (angle.cos() * j + angle.sin() * i) + phase).sin()
                })
                .collect();
            (place(&p, rng), ImageKind::Grating)
        }
    };
    let image = Instance::new(Shape::gray(h, w), values)?;
    let sigma_x = stats(&image)?.std;
    Ok(SyntheticImage { image, kind, sigma_x })
}

/// `n` images, image `k` drawn from its own stream of `seed`.
pub fn generate_corpus(n: usize, size: usize, mix: &MixWeights, seed: u64) -> Result<Vec<SyntheticImage>> {
    if n == 0 {
        return Err(Error::InvalidParameter("corpus must contain at least one image".into()));
    }
    (0..n).map(|k| generate_image(size, mix, &mut task_stream(seed, 0xC0, k as u64))).collect()
}

/// Uniform image, then uniform `p x p` position.
pub fn sample_patch<R: Rng + ?Sized>(images: &[Instance], p: usize, rng: &mut R) -> Result<Instance> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty corpus".into()));
    }
    let img = &images[rng.random_range(0..images.len())];
    crop(img, p, rng)
}

pub fn crop<R: Rng + ?Sized>(img: &Instance, p: usize, rng: &mut R) -> Result<Instance> {
    let s = img.shape();
    if s.height < p || s.width < p || p == 0 {
        return Err(Error::TooSmall(format!("{p}x{p} patch from {s} image")));
    }
    let i0 = rng.random_range(0..=s.height - p);
    let j0 = rng.random_range(0..=s.width - p);
    let mut v = Vec::with_capacity(s.channels * p * p);
    for c in 0..s.channels {
        let plane = img.channel(c);
        for i in i0..i0 + p {
            v.extend_from_slice(&plane[i * s.width + j0..i * s.width + j0 + p]);
        }
    }
    Instance::new(Shape::new(s.channels, p, p), v)
}

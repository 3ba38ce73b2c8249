//! Diagnostics in normalized coordinates: noise-level sweeps, Δ statistics,
//! coverage tables, Q-versus-Δ curves, equivariance defects and
//! finite-difference Jacobians.

use rand::Rng;
use rayon::prelude::*;

use crate::backbones::Backbone;
use crate::corpus::sample_patch;
use crate::error::{Error, Result};
use crate::instance::{delta, matched_target, stats, t_ne, Instance};
use crate::metrics::{psnr, q_value, ssim};
use crate::noise::{corrupt, NoiseKind, NoiseModel};
use crate::rng::task_stream;
use crate::wrapper::ne_defect;

const TAG_SWEEP: u32 = 0x5E;
const TAG_PATCH: u32 = 0xD0;
const TAG_NOISE: u32 = 0xD1;

fn noise_index(sigma_index: usize, k: usize) -> u64 {
    ((sigma_index as u64) << 28) | k as u64
}

/// Linear-interpolation quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `10 log10(d R^2) + Q - 20 log10 std(y)`: PSNR rebuilt from its
/// normalized-space term.
pub fn decomposed_psnr(q: f64, std_y: f64, d: usize, range: f64) -> f64 {
    10.0 * (d as f64 * range * range).log10() + q - 20.0 * std_y.log10()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sigma_test: f64,
    pub input_psnr_mean: f64,
    pub output_psnr_mean: f64,
    pub output_ssim_mean: f64,
    pub input_psnr: Vec<f64>,
    pub output_psnr: Vec<f64>,
    pub output_ssim: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, sigma_test: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.sigma_test == sigma_test)
    }
}

/// Corrupt every image at every test level (one noise stream per
/// `(level, image)`), denoise and score.
pub fn mismatch_sweep(
    f: &dyn Backbone,
    images: &[Instance],
    sigma_tests: &[f64],
    noise: NoiseKind,
    seed: u64,
) -> Result<SweepResult> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("no evaluation images".into()));
    }
    let rows = sigma_tests
        .iter()
        .enumerate()
        .map(|(si, &sigma)| {
            let scores = images
                .par_iter()
                .enumerate()
                .map(|(k, x)| {
                    let mut rng = task_stream(seed, TAG_SWEEP, noise_index(si, k));
                    let y = corrupt(x, NoiseModel { kind: noise, sigma }, &mut rng)?;
                    let xhat = f.denoise(&y)?;
                    Ok((psnr(&y, x, 1.0)?, psnr(&xhat, x, 1.0)?, ssim(&xhat, x, 1.0)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let input_psnr: Vec<f64> = scores.iter().map(|s| s.0).collect();
            let output_psnr: Vec<f64> = scores.iter().map(|s| s.1).collect();
            let output_ssim: Vec<f64> = scores.iter().map(|s| s.2).collect();
            Ok(SweepRow {
                sigma_test: sigma,
                input_psnr_mean: mean(&input_psnr),
                output_psnr_mean: mean(&output_psnr),
                output_ssim_mean: mean(&output_ssim),
                input_psnr,
                output_psnr,
                output_ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Mean [`ne_defect`] over `images x trials` draws of
/// `a ~ U(0.5, 1.5)`, `b ~ U(-0.25, 0.25)`.
pub fn epsilon_ne_sweep<R: Rng + ?Sized>(f: &dyn Backbone, images: &[Instance], trials: usize, rng: &mut R) -> Result<f64> {
    if trials == 0 || images.is_empty() {
        return Err(Error::InvalidParameter("need at least one image and one trial".into()));
    }
    let mut total = 0.0;
    for y in images {
        for _ in 0..trials {
            let a = rng.random_range(0.5..1.5);
            let b = rng.random_range(-0.25..0.25);
            total += ne_defect(f, y, a, b)?;
        }
    }
    Ok(total / (images.len() * trials) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Δ samples at one noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaStats {
    pub sigma: f64,
    pub samples: Vec<f64>,
    pub q025: f64,
    pub q975: f64,
    pub mean: f64,
    pub mean_sq: f64,
}

impl DeltaStats {
    pub fn from_samples(sigma: f64, samples: Vec<f64>) -> Self {
        let s = sorted(&samples);
        Self {
            sigma,
            q025: quantile_sorted(&s, 0.025),
            q975: quantile_sorted(&s, 0.975),
            mean: mean(&samples),
            mean_sq: samples.iter().map(|d| d * d).sum::<f64>() / samples.len() as f64,
            samples,
        }
    }

    pub fn histogram(&self, bins: usize, lo: f64, hi: f64) -> Histogram {
        let bins = bins.max(1);
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &d in &self.samples {
            if d >= lo && d <= hi {
                let k = if width > 0.0 { (((d - lo) / width) as usize).min(bins - 1) } else { 0 };
                counts[k] += 1;
            }
        }
        Histogram { edges, counts }
    }
}

/// Clean patch `k` (shared by every noise level) and its noisy copy at
/// level `si`.
fn patch_pair(corpus: &[Instance], p: usize, sigma: f64, si: usize, k: usize, seed: u64) -> Result<(Instance, Instance)> {
    let x = sample_patch(corpus, p, &mut task_stream(seed, TAG_PATCH, k as u64))?;
    let y = corrupt(&x, NoiseModel::gaussian(sigma), &mut task_stream(seed, TAG_NOISE, noise_index(si, k)))?;
    Ok((x, y))
}

fn delta_of(x: &Instance, y: &Instance) -> Result<f64> {
    let (yt, s) = t_ne(y)?;
    delta(&yt.values, &matched_target(x, s))
}

/// Per level: Δ over `n_patches` AWGN-corrupted `p x p` patches. The same
/// clean patches are used at every level.
pub fn delta_stats(corpus: &[Instance], sigmas: &[f64], n_patches: usize, p: usize, seed: u64) -> Result<Vec<DeltaStats>> {
    if n_patches < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 patches, got {n_patches}")));
    }
    sigmas
        .iter()
        .enumerate()
        .map(|(si, &sigma)| {
            let samples = (0..n_patches)
                .into_par_iter()
                .map(|k| {
                    let (x, y) = patch_pair(corpus, p, sigma, si, k, seed)?;
                    delta_of(&x, &y)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DeltaStats::from_samples(sigma, samples))
        })
        .collect()
}

/// `matrix[i][j] = m(test_sigmas[j]; train_sigmas[i])` in percent: the share
/// of test-level Δ inside the central 95% interval of the train level.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageTable {
    pub train_sigmas: Vec<f64>,
    pub test_sigmas: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub matrix: Vec<Vec<f64>>,
}

impl CoverageTable {
    pub fn get(&self, sigma_test: f64, sigma_train: f64) -> Option<f64> {
        let i = self.train_sigmas.iter().position(|&s| s == sigma_train)?;
        let j = self.test_sigmas.iter().position(|&s| s == sigma_test)?;
        Some(self.matrix[i][j])
    }
}

pub fn coverage_table(stats: &[DeltaStats], train_sigmas: &[f64], test_sigmas: &[f64]) -> Result<CoverageTable> {
    let find = |sigma: f64| {
        stats
            .iter()
            .find(|s| s.sigma == sigma)
            .ok_or_else(|| Error::InvalidParameter(format!("no delta samples for sigma {sigma}")))
    };
    let mut intervals = Vec::with_capacity(train_sigmas.len());
    let mut matrix = Vec::with_capacity(train_sigmas.len());
    for &tr in train_sigmas {
        let train = find(tr)?;
        let (lo, hi) = (train.q025, train.q975);
        let row = test_sigmas
            .iter()
            .map(|&te| {
                let test = find(te)?;
                let inside = test.samples.iter().filter(|&&d| d >= lo && d <= hi).count();
                Ok(100.0 * inside as f64 / test.samples.len() as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        intervals.push((lo, hi));
        matrix.push(row);
    }
    Ok(CoverageTable { train_sigmas: train_sigmas.to_vec(), test_sigmas: test_sigmas.to_vec(), intervals, matrix })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinSeries {
    pub sigma: f64,
    pub counts: Vec<usize>,
    /// NaN for empty bins.
    pub q_mean: Vec<f64>,
    pub q_std: Vec<f64>,
    /// Central 95% of this level's own Δ distribution.
    pub display: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedCurve {
    pub edges: Vec<f64>,
    pub series: Vec<BinSeries>,
}

impl BinnedCurve {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Largest spread of per-bin mean Q across levels, over bins where at
    /// least two levels have `min_count` samples and the bin centre lies
    /// inside their display ranges. `None` if no bin qualifies.
    pub fn max_cross_sigma_gap(&self, min_count: usize) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for (b, c) in self.centers().into_iter().enumerate() {
            let qs: Vec<f64> = self
                .series
                .iter()
                .filter(|s| s.counts[b] >= min_count && c >= s.display.0 && c <= s.display.1)
                .map(|s| s.q_mean[b])
                .collect();
            if qs.len() >= 2 {
                let gap = qs.iter().cloned().fold(f64::MIN, f64::max) - qs.iter().cloned().fold(f64::MAX, f64::min);
                worst = Some(worst.map_or(gap, |w: f64| w.max(gap)));
            }
        }
        worst
    }
}

/// Bin `(Δ, Q)` samples per level into `bins` fixed-width bins over the
/// pooled central 99% Δ range. Samples outside that range are dropped.
pub fn bin_q_samples(per_sigma: &[(f64, Vec<(f64, f64)>)], bins: usize) -> Result<BinnedCurve> {
    if bins < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 bins, got {bins}")));
    }
    let pooled = sorted(&per_sigma.iter().flat_map(|(_, v)| v.iter().map(|s| s.0)).collect::<Vec<_>>());
    if pooled.is_empty() {
        return Err(Error::InvalidParameter("no samples to bin".into()));
    }
    let (lo, hi) = (quantile_sorted(&pooled, 0.005), quantile_sorted(&pooled, 0.995));
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let series = per_sigma
        .iter()
        .map(|(sigma, samples)| {
            let mut sum = vec![0.0; bins];
            let mut sum_sq = vec![0.0; bins];
            let mut counts = vec![0usize; bins];
            for &(d, q) in samples {
                if d < lo || d > hi {
                    continue;
                }
                let k = if width > 0.0 { (((d - lo) / width) as usize).min(bins - 1) } else { 0 };
                counts[k] += 1;
                sum[k] += q;
                sum_sq[k] += q * q;
            }
            let q_mean: Vec<f64> =
                (0..bins).map(|k| if counts[k] > 0 { sum[k] / counts[k] as f64 } else { f64::NAN }).collect();
            let q_std = (0..bins)
                .map(|k| match counts[k] {
                    0 => f64::NAN,
                    n => (sum_sq[k] / n as f64 - q_mean[k] * q_mean[k]).max(0.0).sqrt(),
                })
                .collect();
            let own = sorted(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
            BinSeries {
                sigma: *sigma,
                counts,
                q_mean,
                q_std,
                display: (quantile_sorted(&own, 0.025), quantile_sorted(&own, 0.975)),
            }
        })
        .collect();
    Ok(BinnedCurve { edges, series })
}

/// `(Δ, Q)` for one predictor at one level. The prediction is re-expressed
/// in the noisy instance's coordinates, `(f(y) - mu(y)) / std(y)`, so any
/// raw-space predictor can be scored; for a Direct-wrapped `f` with
/// `eps = 0` this is exactly `g(T(y))`. Constant noisy patches are skipped.
pub fn delta_q_samples(
    f: &dyn Backbone,
    corpus: &[Instance],
    sigma: f64,
    sigma_index: usize,
    n_patches: usize,
    p: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let out = (0..n_patches)
        .into_par_iter()
        .map(|k| {
            let (x, y) = patch_pair(corpus, p, sigma, sigma_index, k, seed)?;
            let s = stats(&y)?;
            if s.std == 0.0 {
                return Ok(None);
            }
            let (yt, _) = t_ne(&y)?;
            let xt = matched_target(&x, s);
            let g = f.denoise(&y)?.map(|v| (v - s.mu) / s.std);
            Ok(Some((delta(&yt.values, &xt)?, q_value(&g, &xt)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().flatten().collect())
}

pub fn q_vs_delta(
    f: &dyn Backbone,
    corpus: &[Instance],
    sigmas: &[f64],
    bins: usize,
    n_patches: usize,
    p: usize,
    seed: u64,
) -> Result<BinnedCurve> {
    let per_sigma = sigmas
        .iter()
        .enumerate()
        .map(|(si, &sigma)| Ok((sigma, delta_q_samples(f, corpus, sigma, si, n_patches, p, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    bin_q_samples(&per_sigma, bins)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianRow {
    pub index: usize,
    /// Row `index` of the Jacobian laid out on the input grid.
    pub filter: Instance,
    pub sum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianReport {
    pub rows: Vec<JacobianRow>,
    /// `|f(y) - J y| / |f(y)|`.
    pub rho: f64,
}

/// Central difference step on the `[0, 1]` scale.
pub const FD_STEP: f64 = 1e-4;

/// Finite-difference Jacobian of `f` at `y`: the requested rows and the
/// Euler residual computed with the full matrix.
pub fn jacobian_rows(f: &dyn Backbone, y: &Instance, row_indices: &[usize]) -> Result<JacobianReport> {
    let d = y.len();
    if let Some(&bad) = row_indices.iter().find(|&&r| r >= d) {
        return Err(Error::InvalidParameter(format!("row {bad} out of range for {d} outputs")));
    }
    let fy = f.denoise(y)?;
    let mut jy = vec![0.0; fy.len()];
    let mut rows = vec![vec![0.0; d]; row_indices.len()];
    let mut probe = y.values().to_vec();
    for j in 0..d {
        let orig = probe[j];
        probe[j] = orig + FD_STEP;
        let plus = f.denoise(&y.with_values(probe.clone())?)?;
        probe[j] = orig - FD_STEP;
        let minus = f.denoise(&y.with_values(probe.clone())?)?;
        probe[j] = orig;
        for (i, (p, m)) in plus.values().iter().zip(minus.values()).enumerate() {
            let col = (p - m) / (2.0 * FD_STEP);
            jy[i] += col * orig;
        }
        for (row, &r) in rows.iter_mut().zip(row_indices) {
            row[j] = (plus.values()[r] - minus.values()[r]) / (2.0 * FD_STEP);
        }
    }
    let resid: f64 = fy.values().iter().zip(&jy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let rows = rows
        .into_iter()
        .zip(row_indices)
        .map(|(row, &index)| {
            let sum = row.iter().sum();
            Ok(JacobianRow { index, filter: y.with_values(row)?, sum })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JacobianReport { rows, rho: resid / fy.norm() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::{EquivarianceClass, FnBackbone, Identity, UnitSumConv};
    use crate::instance::Shape;
    use crate::rng::substream;

    fn ramp(h: usize, w: usize) -> Instance {
        let v = (0..h * w).map(|k| 0.2 + 0.6 * ((k * 7919) % 97) as f64 / 97.0).collect();
        Instance::new(Shape::gray(h, w), v).unwrap()
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.125), 0.5);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn identity_sweep_reproduces_the_no_denoising_line() {
        let images = vec![ramp(16, 16), ramp(16, 16).affine(0.5, 0.1)];
        let r = mismatch_sweep(&Identity, &images, &[0.0, 10.0, 30.0], NoiseKind::Gaussian, 4).unwrap();
        assert_eq!(r.rows[0].output_psnr_mean, crate::metrics::PSNR_CAP);
        for row in &r.rows {
            assert_eq!(row.input_psnr, row.output_psnr);
        }
    }

    #[test]
    fn zero_noise_gives_zero_delta() {
        let corpus = vec![ramp(16, 16)];
        let s = delta_stats(&corpus, &[0.0], 1000, 8, 1).unwrap();
        assert!(s[0].samples.iter().all(|&d| d == 0.0));
        assert!(delta_stats(&corpus, &[0.0], 999, 8, 1).is_err());
    }

    #[test]
    fn coverage_diagonal_is_near_95() {
        let corpus = vec![ramp(32, 32), ramp(32, 32).affine(0.1, 0.4)];
        let st = delta_stats(&corpus, &[10.0, 30.0], 4000, 8, 2).unwrap();
        let t = coverage_table(&st, &[10.0, 30.0], &[10.0, 30.0]).unwrap();
        for i in 0..2 {
            assert!((t.matrix[i][i] - 95.0).abs() <= 1.0, "{}", t.matrix[i][i]);
        }
        for v in t.matrix.iter().flatten() {
            assert!((0.0..=100.0).contains(v));
        }
        assert!(coverage_table(&st, &[20.0], &[10.0]).is_err());
    }

    #[test]
    fn identity_q_follows_delta() {
        let corpus = vec![ramp(32, 32)];
        let curve = q_vs_delta(&Identity, &corpus, &[20.0, 40.0], 10, 2000, 8, 3).unwrap();
        let centers = curve.centers();
        for s in &curve.series {
            for (b, &c) in centers.iter().enumerate() {
                if s.counts[b] >= 20 {
                    // Q = -20 log10 Δ per sample; bins are narrow
                    assert!((s.q_mean[b] + 20.0 * c.log10()).abs() < 0.5, "{} vs {}", s.q_mean[b], c);
                }
            }
        }
    }

    #[test]
    fn oracle_q_is_capped_and_empty_bins_are_nan() {
        let samples = vec![(1.0, vec![(0.0, 300.0), (1.0, 300.0), (5.0, 300.0)])];
        let curve = bin_q_samples(&samples, 5).unwrap();
        for (k, &c) in curve.series[0].counts.iter().enumerate() {
            if c > 0 {
                assert_eq!(curve.series[0].q_mean[k], 300.0);
            } else {
                assert!(curve.series[0].q_mean[k].is_nan());
            }
        }
        assert!(bin_q_samples(&samples, 4).is_err());
    }

    #[test]
    fn jacobian_of_unit_sum_conv() {
        let conv = UnitSumConv::separable(&[0.25, 0.5, 0.25]).unwrap();
        let y = ramp(6, 6);
        let r = jacobian_rows(&conv, &y, &[0, 14, 35]).unwrap();
        for row in &r.rows {
            assert!((row.sum - 1.0).abs() < 1e-6);
        }
        assert!(r.rho < 1e-6);
    }

    #[test]
    fn jacobian_of_constant_map_has_rho_one() {
        let c = FnBackbone::new("const", EquivarianceClass::None, |z: &Instance| Ok(z.map(|_| 0.7)));
        let r = jacobian_rows(&c, &ramp(3, 3), &[4]).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert!(jacobian_rows(&c, &ramp(3, 3), &[9]).is_err());
    }

    #[test]
    fn identity_has_zero_defect() {
        let mut rng = substream(5, 0);
        assert_eq!(epsilon_ne_sweep(&Identity, &[ramp(4, 4)], 10, &mut rng).unwrap(), 0.0);
    }
}

//! Image-quality metrics.

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Returned when the reconstruction is exact.
pub const PSNR_CAP: f64 = 300.0;

/// `10 log10(d R^2 / |xhat - x|^2)`, capped at [`PSNR_CAP`].
pub fn psnr(xhat: &Instance, x: &Instance, range: f64) -> Result<f64> {
    let err = xhat.sub(x)?.norm_sq();
    let d = x.len() as f64;
    if err == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (d * range * range / err).log10()).min(PSNR_CAP))
}

/// Mean squared error per entry.
pub fn mse(xhat: &Instance, x: &Instance) -> Result<f64> {
    Ok(xhat.sub(x)?.norm_sq() / x.len() as f64)
}

/// `-10 log10 |g(ytilde) - xtilde|^2`, the normalized-space quality.
pub fn q_value(g_out: &Instance, x_tilde: &Instance) -> Result<f64> {
    let err = g_out.sub(x_tilde)?.norm_sq();
    if err == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * err.log10()).min(PSNR_CAP))
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WIN / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WIN).map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
/// channels, with dynamic range `range`.
pub fn ssim(a: &Instance, b: &Instance, range: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    let s = a.shape();
    if s.height < SSIM_WIN || s.width < SSIM_WIN {
        return Err(Error::TooSmall(format!("{s} is smaller than the {SSIM_WIN}x{SSIM_WIN} SSIM window")));
    }
    let w = gaussian_window();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let (oh, ow) = (s.height - SSIM_WIN + 1, s.width - SSIM_WIN + 1);
    let mut total = 0.0;
    for c in 0..s.channels {
        let (pa, pb) = (a.channel(c), b.channel(c));
        for i in 0..oh {
            for j in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (di, wi) in w.iter().enumerate() {
                    for (dj, wj) in w.iter().enumerate() {
                        let k = (i + di) * s.width + j + dj;
                        let wt = wi * wj;
                        let (u, v) = (pa[k], pb[k]);
                        ma += wt * u;
                        mb += wt * v;
                        saa += wt * u * u;
                        sbb += wt * v * v;
                        sab += wt * u * v;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    Ok(total / (s.channels * oh * ow) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Shape;

    #[test]
    fn psnr_examples() {
        let x = Instance::from_vec(vec![0.0; 4]).unwrap();
        let xhat = Instance::from_vec(vec![0.1; 4]).unwrap();
        assert!((psnr(&xhat, &x, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), PSNR_CAP);
        assert!(psnr(&x, &Instance::from_vec(vec![0.0; 3]).unwrap(), 1.0).is_err());
    }

    #[test]
    fn q_value_example() {
        let g = Instance::from_vec(vec![0.1, 0.0]).unwrap();
        let t = Instance::from_vec(vec![0.0, 0.0]).unwrap();
        assert!((q_value(&g, &t).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let v = (0..256).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
        let x = Instance::new(Shape::gray(16, 16), v).unwrap();
        assert!((ssim(&x, &x, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let y = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &y, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = Instance::zeros(Shape::gray(10, 20)).unwrap();
        assert!(matches!(ssim(&x, &x, 1.0), Err(Error::TooSmall(_))));
    }
}

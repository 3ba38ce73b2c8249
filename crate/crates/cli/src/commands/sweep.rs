use std::path::PathBuf;

use normeq::analysis::mismatch_sweep;
use normeq::noise::NoiseKind;
use normeq::wrapper::DEFAULT_EPSILON;

use super::{load_corpus, load_denoiser, Context};
use crate::error::CliError;
use crate::plot::{line_chart, Series};
use crate::row;

pub const DEFAULT_SIGMAS: &str = "5,10,15,20,25,30,35,40,45,50";

pub fn sweep(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let f = load_denoiser(cfg, DEFAULT_EPSILON)?;
    let images = load_corpus(cfg, 24, 2)?;
    let sigmas: Vec<f64> = cfg.get_list("sigmas", DEFAULT_SIGMAS)?;
    let noise = NoiseKind::parse(&cfg.get_str("noise", "gaussian"))?;
    if sigmas.is_empty() {
        return Err(CliError::User("sigmas is empty".into()));
    }

    let dir = ctx.run_dir("sweep")?;
    let result = mismatch_sweep(&f, &images, &sigmas, noise, ctx.seed)?;
    let mut means = dir.csv("sweep.csv", &["sigma_test", "input_psnr", "output_psnr", "output_ssim"])?;
    let mut per_image = dir.csv("sweep_images.csv", &["sigma_test", "image", "input_psnr", "output_psnr", "output_ssim"])?;
    for r in &result.rows {
        row!(means, r.sigma_test, r.input_psnr_mean, r.output_psnr_mean, r.output_ssim_mean)?;
        for k in 0..r.output_psnr.len() {
            row!(per_image, r.sigma_test, k, r.input_psnr[k], r.output_psnr[k], r.output_ssim[k])?;
        }
    }
    means.finish()?;
    per_image.finish()?;
    let series = vec![
        Series::new("input", result.rows.iter().map(|r| (r.sigma_test, r.input_psnr_mean)).collect()),
        Series::new(f.mode().as_str(), result.rows.iter().map(|r| (r.sigma_test, r.output_psnr_mean)).collect()),
    ];
    dir.write_text("psnr.svg", &line_chart("PSNR across test noise", "sigma_test", "PSNR (dB)", &series))?;
    Ok(dir.path().to_path_buf())
}

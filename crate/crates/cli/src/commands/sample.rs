use std::path::PathBuf;

use normeq::noise::{corrupt, NoiseModel};
use normeq::rng::substream;
use normeq::sampler::{inpaint, make_inpainting_mask, residual_stop_denoise, SamplerConfig, Trajectory};
use normeq::wrapper::DEFAULT_EPSILON;

use super::{load_clean, load_denoiser, Context};
use crate::error::CliError;
use crate::output::RunDir;
use crate::plot::{line_chart, Series};
use crate::{pgm, row};

fn write_trajectory(dir: &RunDir, t: &Trajectory) -> Result<(), CliError> {
    let mut csv = dir.csv("trajectory.csv", &["t", "sigma_hat", "h", "gamma", "psnr"])?;
    for s in &t.steps {
        row!(csv, s.t, s.sigma_hat, s.h, s.gamma, s.psnr.unwrap_or(f64::NAN))?;
    }
    csv.finish()?;
    let psnr = t.steps.iter().map(|s| (s.t as f64, s.psnr.unwrap_or(f64::NAN))).collect();
    let sigma = t.steps.iter().map(|s| (s.t as f64, (s.sigma_hat * 255.0).log10())).collect();
    dir.write_text("psnr.svg", &line_chart("sampler trajectory", "t", "PSNR (dB)", &[Series::new("psnr", psnr)]))?;
    dir.write_text(
        "sigma_hat.svg",
        &line_chart("estimated noise level", "t", "log10 sigma_hat (8-bit units)", &[Series::new("sigma_hat", sigma)]),
    )
}

pub fn sample_denoise(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let f = load_denoiser(cfg, DEFAULT_EPSILON)?;
    let clean = load_clean(cfg)?;
    let sigma: f64 = cfg.get("sigma", 25.0)?;
    let d = SamplerConfig::residual_stop();
    let sc = SamplerConfig {
        sigma_l: cfg.get("sigma_l", d.sigma_l)?,
        h0: cfg.get("h0", d.h0)?,
        t_max: cfg.get("t_max", d.t_max)?,
        ..d
    };
    sc.validate()?;

    let dir = ctx.run_dir("sample-denoise")?;
    let y0 = corrupt(&clean, NoiseModel::gaussian(sigma), &mut substream(ctx.seed, 0x5A))?;
    let r = residual_stop_denoise(&f, &y0, &clean, &sc)?;
    write_trajectory(&dir, &r.trajectory)?;
    pgm::write(&dir.file("noisy.pgm"), &y0)?;
    pgm::write(&dir.file("denoised.pgm"), &r.trajectory.xhat)?;
    let mut s = dir.csv("summary.csv", &["metric", "value"])?;
    row!(s, "input_psnr", r.input_psnr)?;
    row!(s, "one_pass_psnr", r.one_pass_psnr)?;
    row!(s, "best_psnr", r.best_psnr)?;
    row!(s, "final_psnr", r.final_psnr)?;
    row!(s, "gap", r.gap())?;
    row!(s, "steps", r.trajectory.steps.len())?;
    row!(s, "stop", r.trajectory.stop.as_str())?;
    s.finish()?;
    Ok(dir.path().to_path_buf())
}

pub fn sample_inpaint(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let f = load_denoiser(cfg, DEFAULT_EPSILON)?;
    let clean = load_clean(cfg)?;
    let fraction: f64 = cfg.get("fraction", 0.1)?;
    let d = SamplerConfig::inpainting();
    let sc = SamplerConfig {
        sigma0: cfg.get("sigma0", d.sigma0)?,
        sigma_l: cfg.get("sigma_l", d.sigma_l)?,
        h0: cfg.get("h0", d.h0)?,
        beta: cfg.get("beta", d.beta)?,
        t_max: cfg.get("t_max", d.t_max)?,
    };
    sc.validate()?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CliError::User(format!("fraction {fraction} outside [0, 1]")));
    }

    let dir = ctx.run_dir("sample-inpaint")?;
    let mut rng = substream(ctx.seed, 0x1A);
    let p = make_inpainting_mask(clean.shape(), fraction, &mut rng)?;
    let r = inpaint(&f, &clean, &p, &sc, &mut rng)?;
    write_trajectory(&dir, &r.trajectory)?;
    pgm::write(&dir.file("observed.pgm"), &p.project(&clean)?)?;
    pgm::write(&dir.file("inpainted.pgm"), &r.trajectory.xhat)?;
    let mut s = dir.csv("summary.csv", &["metric", "value"])?;
    row!(s, "observed_psnr", r.observed_psnr)?;
    row!(s, "one_pass_psnr", r.one_pass_psnr)?;
    row!(s, "final_psnr", r.final_psnr)?;
    row!(s, "steps", r.trajectory.steps.len())?;
    row!(s, "stop", r.trajectory.stop.as_str())?;
    s.finish()?;
    Ok(dir.path().to_path_buf())
}

use std::path::PathBuf;

use normeq::analysis::{coverage_table, delta_stats, epsilon_ne_sweep, jacobian_rows, q_vs_delta, DeltaStats};
use normeq::corpus::crop;
use normeq::noise::{corrupt, NoiseModel};
use normeq::rng::{substream, task_stream};
use normeq::wrapper::{WrapMode, WrappedDenoiser};
use normeq::Instance;

use super::{load_backbone, load_clean, load_corpus, load_denoiser, Context};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot::{line_chart, Series};
use crate::row;

const DEFAULT_SIGMAS: &str = "10,20,30,40,50";

fn sigma_list(cfg: &mut RunConfig, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = cfg.get_list(key, default)?;
    if v.is_empty() || v.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(CliError::User(format!("{key} must be a non-empty list of levels >= 0")));
    }
    Ok(v)
}

pub fn analyze_delta(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let corpus = load_corpus(cfg, 200, 1)?;
    let sigmas = sigma_list(cfg, "sigmas", DEFAULT_SIGMAS)?;
    let patches: usize = cfg.get("patches", 10_000)?;
    let p: usize = cfg.get("patch", 8)?;
    let bins: usize = cfg.get("bins", 60)?;

    let dir = ctx.run_dir("analyze-delta")?;
    let stats = delta_stats(&corpus, &sigmas, patches, p, ctx.seed)?;
    let root_d = p as f64;
    let mut csv = dir.csv("delta.csv", &["sigma", "samples", "mean", "mean_sq", "q025", "q975", "mean_over_sqrt_d"])?;
    for s in &stats {
        row!(csv, s.sigma, s.samples.len(), s.mean, s.mean_sq, s.q025, s.q975, s.mean / root_d)?;
    }
    csv.finish()?;
    let lo = stats.iter().flat_map(|s| s.samples.iter().copied()).fold(f64::MAX, f64::min);
    let hi = stats.iter().flat_map(|s| s.samples.iter().copied()).fold(f64::MIN, f64::max);
    let mut hist = dir.csv("delta_hist.csv", &["sigma", "bin_lo", "bin_hi", "count"])?;
    let mut series = Vec::new();
    for s in &stats {
        let h = s.histogram(bins, lo, hi);
        for (k, &c) in h.counts.iter().enumerate() {
            row!(hist, s.sigma, h.edges[k], h.edges[k + 1], c)?;
        }
        let width = h.edges[1] - h.edges[0];
        let density = h
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (0.5 * (h.edges[k] + h.edges[k + 1]), c as f64 / (s.samples.len() as f64 * width)))
            .collect();
        series.push(Series::new(format!("sigma {}", s.sigma), density));
    }
    hist.finish()?;
    dir.write_text("delta.svg", &line_chart("difficulty distribution", "delta", "density", &series))?;
    Ok(dir.path().to_path_buf())
}

pub fn analyze_coverage(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let corpus = load_corpus(cfg, 200, 1)?;
    let test = sigma_list(cfg, "sigmas", DEFAULT_SIGMAS)?;
    let default_train = cfg.raw("sigmas").unwrap_or(DEFAULT_SIGMAS).to_string();
    let train = sigma_list(cfg, "train_sigmas", &default_train)?;
    let patches: usize = cfg.get("patches", 100_000)?;
    let p: usize = cfg.get("patch", 8)?;

    let dir = ctx.run_dir("analyze-coverage")?;
    let mut levels = test.clone();
    levels.extend(train.iter().filter(|s| !test.contains(s)));
    let stats: Vec<DeltaStats> = delta_stats(&corpus, &levels, patches, p, ctx.seed)?;
    let table = coverage_table(&stats, &train, &test)?;
    let header: Vec<String> = std::iter::once("sigma_train".to_string()).chain(test.iter().map(|s| s.to_string())).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = dir.csv("coverage.csv", &header)?;
    for (tr, row) in table.train_sigmas.iter().zip(&table.matrix) {
        let cells: Vec<crate::output::Cell> = std::iter::once((*tr).into()).chain(row.iter().map(|&m| m.into())).collect();
        csv.row(&cells)?;
    }
    csv.finish()?;
    let mut iv = dir.csv("intervals.csv", &["sigma_train", "q025", "q975"])?;
    for (tr, (lo, hi)) in table.train_sigmas.iter().zip(&table.intervals) {
        row!(iv, *tr, *lo, *hi)?;
    }
    iv.finish()?;
    Ok(dir.path().to_path_buf())
}

pub fn analyze_qdelta(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let f = load_denoiser(cfg, 0.0)?;
    let corpus = load_corpus(cfg, 200, 1)?;
    let sigmas = sigma_list(cfg, "sigmas", DEFAULT_SIGMAS)?;
    let patches: usize = cfg.get("patches", 2000)?;
    let p: usize = cfg.get("patch", 8)?;
    let bins: usize = cfg.get("bins", 20)?;
    let min_count: usize = cfg.get("min_count", 20)?;

    let dir = ctx.run_dir("analyze-qdelta")?;
    let curve = q_vs_delta(&f, &corpus, &sigmas, bins, patches, p, ctx.seed)?;
    let centers = curve.centers();
    let mut csv = dir.csv("qdelta.csv", &["sigma", "delta", "count", "q_mean", "q_std"])?;
    let mut series = Vec::new();
    for s in &curve.series {
        for (b, &c) in centers.iter().enumerate() {
            row!(csv, s.sigma, c, s.counts[b], s.q_mean[b], s.q_std[b])?;
        }
        let pts = centers
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, if s.counts[b] >= min_count { s.q_mean[b] } else { f64::NAN }))
            .collect();
        series.push(Series::new(format!("sigma {}", s.sigma), pts));
    }
    csv.finish()?;
    let mut summary = dir.csv("summary.csv", &["metric", "value"])?;
    row!(summary, "max_cross_sigma_gap", curve.max_cross_sigma_gap(min_count).unwrap_or(f64::NAN))?;
    summary.finish()?;
    dir.write_text("qdelta.svg", &line_chart("Q against difficulty", "delta", "Q (dB)", &series))?;
    Ok(dir.path().to_path_buf())
}

/// Noisy crops of the corpus, one stream per probe.
fn probes(corpus: &[Instance], n: usize, side: usize, sigma: f64, seed: u64) -> Result<Vec<Instance>, CliError> {
    (0..n)
        .map(|k| {
            let mut rng = task_stream(seed, 0xDEF, k as u64);
            let x = crop(&corpus[k % corpus.len()], side, &mut rng)?;
            Ok(corrupt(&x, NoiseModel::gaussian(sigma), &mut rng)?)
        })
        .collect()
}

pub fn analyze_ne_defect(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let chosen = load_backbone(cfg)?;
    let variants: Vec<String> = cfg.get_list("variants", "none,direct,residual")?;
    let variants = variants.iter().map(|v| WrapMode::parse(v)).collect::<normeq::Result<Vec<_>>>()?;
    let epsilon: f64 = cfg.get("epsilon", 0.0)?;
    let corpus = load_corpus(cfg, 12, 2)?;
    let n: usize = cfg.get("probes", 24)?;
    let side: usize = cfg.get("probe_size", 32)?;
    let sigma: f64 = cfg.get("sigma", 25.0)?;
    let trials: usize = cfg.get("trials", 10)?;
    let backbones = match chosen {
        Some(g) => vec![g],
        None => normeq::backbones::catalog(cfg.get("backbone_seed", 0)?)?,
    };

    let dir = ctx.run_dir("analyze-ne-defect")?;
    let ys = probes(&corpus, n, side, sigma, ctx.seed)?;
    let mut csv = dir.csv("ne_defect.csv", &["backbone", "class", "variant", "epsilon", "defect"])?;
    for g in &backbones {
        let desc = g.descriptor();
        for &mode in &variants {
            let f = WrappedDenoiser::new(g.clone(), mode, epsilon)?;
            // every measurement sees the same (a, b) draws
            let d = epsilon_ne_sweep(&f, &ys, trials, &mut substream(ctx.seed, 0xDEF))?;
            let class = desc.class.to_string();
            row!(csv, desc.name.as_str(), class.as_str(), mode.as_str(), epsilon, d)?;
        }
    }
    csv.finish()?;
    Ok(dir.path().to_path_buf())
}

pub fn analyze_jacobian(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let f = load_denoiser(cfg, 0.0)?;
    let clean = load_clean(cfg)?;
    let side: usize = cfg.get("size", 32)?;
    let sigma: f64 = cfg.get("sigma", 25.0)?;
    let rows: Vec<usize> = cfg.get_list("rows", "0")?;

    let dir = ctx.run_dir("analyze-jacobian")?;
    let mut rng = substream(ctx.seed, 0x1AC);
    let x = if clean.shape().height > side || clean.shape().width > side { crop(&clean, side, &mut rng)? } else { clean };
    let y = corrupt(&x, NoiseModel::gaussian(sigma), &mut rng)?;
    let report = jacobian_rows(&f, &y, &rows)?;
    let mut sums = dir.csv("jacobian.csv", &["row", "sum"])?;
    let mut filters = dir.csv("filters.csv", &["row", "i", "j", "value"])?;
    let w = y.shape().width;
    for r in &report.rows {
        row!(sums, r.index, r.sum)?;
        for (k, &v) in r.filter.values().iter().enumerate() {
            row!(filters, r.index, k / w, k % w, v)?;
        }
    }
    sums.finish()?;
    filters.finish()?;
    let mut summary = dir.csv("summary.csv", &["metric", "value"])?;
    row!(summary, "rho", report.rho)?;
    summary.finish()?;
    Ok(dir.path().to_path_buf())
}

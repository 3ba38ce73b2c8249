use std::sync::Arc;

use normeq::analysis::{delta_stats, mismatch_sweep, quantile_sorted};
use normeq::backbones::{Backbone, Identity, UnitSumConv};
use normeq::corpus::{generate_corpus, MixWeights};
use normeq::instance::stats;
use normeq::noise::{corrupt, NoiseKind, NoiseModel};
use normeq::rng::task_stream;
use normeq::wrapper::{WrapMode, WrappedDenoiser};
use normeq::Instance;

fn corpus(n: usize, seed: u64) -> Vec<Instance> {
    generate_corpus(n, 64, &MixWeights::default(), seed).unwrap().into_iter().map(|s| s.image).collect()
}

/// At d = 64^2 the noisy pooled variance concentrates on std(x)^2 + sigma^2.
#[test]
fn noisy_variance_concentrates_in_high_dimension() {
    let images = corpus(40, 3);
    let sigma = 30.0 / 255.0;
    let mut rel: Vec<f64> = images
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let y = corrupt(x, NoiseModel::gaussian(30.0), &mut task_stream(3, 0, k as u64)).unwrap();
            let sx = stats(x).unwrap().std;
            let sy = stats(&y).unwrap().std;
            (sy * sy / (sx * sx + sigma * sigma) - 1.0).abs()
        })
        .collect();
    rel.sort_by(f64::total_cmp);
    assert!(quantile_sorted(&rel, 0.5) <= 0.02, "median rel error {}", quantile_sorted(&rel, 0.5));
}

#[test]
fn delta_grows_with_noise_toward_sqrt_d() {
    let images = corpus(30, 4);
    let stats = delta_stats(&images, &[5.0, 25.0, 100.0, 1000.0], 2000, 8, 1).unwrap();
    for w in stats.windows(2) {
        assert!(w[0].mean < w[1].mean);
    }
    let last = stats.last().unwrap();
    assert!((last.mean / 8.0 - 1.0).abs() < 0.02, "{}", last.mean);
}

#[test]
fn sweeps_are_deterministic_and_share_noise_across_models() {
    let images = corpus(4, 5);
    let smooth: Arc<dyn Backbone> = Arc::new(UnitSumConv::separable(&[0.25, 0.5, 0.25]).unwrap());
    let f = WrappedDenoiser::exact(smooth, WrapMode::Direct);
    let a = mismatch_sweep(&f, &images, &[10.0, 40.0], NoiseKind::Gaussian, 9).unwrap();
    let b = mismatch_sweep(&f, &images, &[10.0, 40.0], NoiseKind::Gaussian, 9).unwrap();
    assert_eq!(a, b);
    let id = mismatch_sweep(&Identity, &images, &[10.0, 40.0], NoiseKind::Gaussian, 9).unwrap();
    for (r, s) in a.rows.iter().zip(&id.rows) {
        assert_eq!(r.input_psnr, s.input_psnr);
        assert_eq!(s.input_psnr, s.output_psnr);
        assert!(r.output_psnr_mean > r.input_psnr_mean);
    }
}

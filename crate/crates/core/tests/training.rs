use normeq::backbones::{Activation, PatchMlpParams, Prediction};
use normeq::corpus::{generate_corpus, MixWeights};
use normeq::instance::{matched_target, stats, t_ne};
use normeq::metrics::mse;
use normeq::noise::{corrupt, NoiseKind, NoiseModel};
use normeq::rng::substream;
use normeq::training::{
    draw_batch, train, training_stream, LrSchedule, Objective, Sample, TrainConfig, TrainableModel, Trainer,
};
use normeq::wrapper::WrapMode;
use normeq::{Error, Instance, Shape};

fn corpus(n: usize, seed: u64) -> Vec<Instance> {
    generate_corpus(n, 64, &MixWeights::default(), seed).unwrap().into_iter().map(|s| s.image).collect()
}

fn mean_val_mse(model: &TrainableModel, images: &[Instance], sigma: f64) -> (f64, f64) {
    let mut rng = substream(99, 0);
    let (mut out, mut id) = (0.0, 0.0);
    for x in images {
        let y = corrupt(x, NoiseModel::gaussian(sigma), &mut rng).unwrap();
        out += mse(&model.predict(&y).unwrap(), x).unwrap();
        id += mse(&y, x).unwrap();
    }
    (out / images.len() as f64, id / images.len() as f64)
}

#[test]
fn short_training_beats_the_identity_map() {
    let train_set = corpus(40, 1);
    let val = corpus(6, 2);
    let mut rng = substream(3, 0);
    let params = PatchMlpParams::init(8, 64, Prediction::Residual, Activation::Relu, &mut rng).unwrap();
    let cfg = TrainConfig { sigma_train: 25.0, steps: 2000, batch: 4, patch_size: 32, seed: 7, ..TrainConfig::default() };
    let cfg = TrainConfig { schedule: TrainConfig::default_schedule(cfg.steps), ..cfg };
    let out = train(TrainableModel::new(params, WrapMode::None, 0.0), &train_set, &cfg).unwrap();
    let (model_mse, identity_mse) = mean_val_mse(&out.model, &val, 25.0);
    assert!(model_mse < identity_mse, "{model_mse} !< {identity_mse}");
    assert_eq!(out.losses.len(), 2000);
}

#[test]
fn same_seed_gives_identical_loss_curves() {
    let train_set = corpus(5, 1);
    let params = PatchMlpParams::init(4, 8, Prediction::Residual, Activation::Relu, &mut substream(1, 0)).unwrap();
    let cfg = TrainConfig { steps: 30, batch: 3, patch_size: 16, softne: true, ..TrainConfig::default() };
    let model = TrainableModel::new(params, WrapMode::Direct, 1e-5);
    let a = train(model.clone(), &train_set, &cfg).unwrap();
    let b = train(model, &train_set, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
}

#[test]
fn non_finite_loss_reports_the_step() {
    let huge = vec![Instance::new(Shape::gray(8, 8), (0..64).map(|k| 1e200 * (k % 3) as f64).collect()).unwrap()];
    let params = PatchMlpParams::init(4, 8, Prediction::Clean, Activation::Relu, &mut substream(1, 0)).unwrap();
    let cfg = TrainConfig { steps: 5, batch: 1, patch_size: 8, ..TrainConfig::default() };
    match train(TrainableModel::new(params, WrapMode::None, 0.0), &huge, &cfg) {
        Err(Error::Divergence { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected divergence, got {other:?}"),
    }
}

/// Raw-space MSE through a Direct wrapper equals the normalized regression
/// weighted by std(y)^2, step for step.
#[test]
fn wrapped_training_equals_weighted_normalized_training() {
    let train_set = corpus(8, 4);
    let params = PatchMlpParams::init(4, 16, Prediction::Residual, Activation::Relu, &mut substream(2, 0)).unwrap();
    let cfg = TrainConfig { sigma_train: 20.0, batch: 4, patch_size: 16, ..TrainConfig::default() };
    let mut raw = Trainer::new(TrainableModel::new(params.clone(), WrapMode::Direct, 0.0), cfg.loss);
    let mut normalized = Trainer::new(TrainableModel::new(params, WrapMode::None, 0.0), cfg.loss);
    let mut rng = training_stream(11);
    for step in 0..60 {
        let batch = draw_batch(&train_set, &cfg, &mut rng).unwrap();
        let weighted: Vec<Sample> = batch
            .iter()
            .map(|s| {
                let st = stats(&s.input).unwrap();
                let (yt, _) = t_ne(&s.input).unwrap();
                Sample { input: yt.values, target: matched_target(&s.target, st), weight: st.std * st.std }
            })
            .collect();
        let lr = cfg.schedule.rate(cfg.lr, step);
        let a = raw.step(&batch, lr).unwrap();
        let b = normalized.step(&weighted, lr).unwrap();
        assert!((a - b).abs() <= 1e-10 * a, "step {step}: {a} vs {b}");
    }
}

/// For a linear backbone, regressing on a second noisy copy and on the clean
/// image give equally good denoisers.
#[test]
fn noise2noise_matches_supervised_for_a_linear_backbone() {
    let train_set = corpus(60, 5);
    let val = corpus(10, 6);
    let params = PatchMlpParams::init(4, 16, Prediction::Residual, Activation::Linear, &mut substream(4, 0)).unwrap();
    let base = TrainConfig {
        sigma_train: 25.0,
        steps: 4000,
        batch: 16,
        patch_size: 16,
        lr: 1e-3,
        schedule: LrSchedule::HalveEvery(800),
        seed: 3,
        ..TrainConfig::default()
    };
    let model = TrainableModel::new(params, WrapMode::None, 0.0);
    let sup = train(model.clone(), &train_set, &base).unwrap();
    let n2n = train(model, &train_set, &TrainConfig { objective: Objective::Noise2Noise, ..base }).unwrap();
    let (a, identity) = mean_val_mse(&sup.model, &val, 25.0);
    let (b, _) = mean_val_mse(&n2n.model, &val, 25.0);
    assert!(a < identity);
    assert!((a - b).abs() <= 0.05 * a, "supervised {a} vs n2n {b}");
}

#[test]
fn noise_kinds_are_normalized() {
    let n = 1_000_000;
    let sigma = 17.0;
    let x = Instance::zeros(Shape::gray(1000, 1000)).unwrap();
    for kind in [NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Laplace, NoiseKind::Rayleigh] {
        let mut rng = substream(21, kind as u64);
        let unit: Vec<f64> = (0..n).map(|_| kind.sample_unit(&mut rng)).collect();
        let mean = unit.iter().sum::<f64>() / n as f64;
        assert!((mean - kind.unit_mean()).abs() <= 0.005, "{kind}: mean {mean}");

        let y = corrupt(&x, NoiseModel { kind, sigma }, &mut rng).unwrap();
        let m = y.mean();
        let std = (y.values().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        assert!((std / (sigma / 255.0) - 1.0).abs() <= 0.01, "{kind}: std {std}");
        if kind == NoiseKind::Rayleigh {
            assert!(m > 0.0);
        }
    }
}

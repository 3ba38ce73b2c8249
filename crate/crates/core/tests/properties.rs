use std::sync::Arc;

use normeq::analysis::decomposed_psnr;
use normeq::backbones::{catalog, Backbone, EquivarianceClass, NeArchStack};
use normeq::instance::{denormalize, matched_target, stats, t_ne};
use normeq::metrics::{psnr, q_value};
use normeq::rng::substream;
use normeq::sampler::{inpaint, make_inpainting_mask, SamplerConfig};
use normeq::wrapper::{ne_defect, normalize, WrapMode, WrappedDenoiser};
use normeq::{Instance, Shape};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Instance> {
    (8usize..14, 8usize..14)
        .prop_flat_map(|(h, w)| (Just((h, w)), prop::collection::vec(0.0f64..1.0, h * w)))
        .prop_filter("non-constant", |(_, v)| v.iter().any(|&x| x != v[0]))
        .prop_map(|((h, w), v)| Instance::new(Shape::gray(h, w), v).unwrap())
}

fn orbit() -> impl Strategy<Value = (f64, f64)> {
    (0.5f64..1.5, -0.25f64..0.25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wrapped_backbones_are_exactly_ne(y in instance(), (a, b) in orbit()) {
        for g in catalog(1).unwrap() {
            for mode in [WrapMode::Direct, WrapMode::Residual] {
                let f = WrappedDenoiser::exact(g.clone(), mode);
                let d = ne_defect(&f, &y, a, b).unwrap();
                prop_assert!(d <= 1e-10, "{} {:?}: {}", g.descriptor().name, mode, d);
            }
        }
    }

    #[test]
    fn ne_labelled_backbones_are_ne_on_their_own(y in instance(), (a, b) in orbit()) {
        for g in catalog(2).unwrap() {
            if g.descriptor().class == EquivarianceClass::Ne {
                let d = ne_defect(g.as_ref(), &y, a, b).unwrap();
                prop_assert!(d <= 1e-10, "{}: {}", g.descriptor().name, d);
            }
        }
    }

    #[test]
    fn normalization_round_trips(y in instance()) {
        let (z, s) = t_ne(&y).unwrap();
        let back = denormalize(&z.values, s).unwrap();
        prop_assert!(back.sub(&y).unwrap().norm() <= 1e-10 * y.norm());
        let d = y.len() as f64;
        prop_assert!((z.values.norm() - d.sqrt()).abs() <= 1e-9);
        prop_assert!(z.values.mean().abs() <= 1e-12);
    }

    #[test]
    fn statistics_follow_the_orbit(y in instance(), (a, b) in orbit()) {
        let s = stats(&y).unwrap();
        let t = stats(&y.affine(a, b)).unwrap();
        prop_assert!((t.mu - (a * s.mu + b)).abs() <= 1e-12);
        prop_assert!((t.std - a * s.std).abs() <= 1e-12);
        let (z1, _) = t_ne(&y).unwrap();
        let (z2, _) = t_ne(&y.affine(a, b)).unwrap();
        prop_assert!(z1.values.sub(&z2.values).unwrap().norm() <= 1e-9);
    }

    #[test]
    fn raw_loss_and_psnr_factorize(x in instance(), seed in 0u64..1000) {
        let g = catalog(3).unwrap().remove(7);
        let mut rng = substream(seed, 0);
        let y = normeq::noise::corrupt(&x, normeq::noise::NoiseModel::gaussian(20.0), &mut rng).unwrap();
        let s = stats(&y).unwrap();
        let n = normalize(&y, 0.0).unwrap();
        let gz = g.denoise(&n.z).unwrap();
        let xt = matched_target(&x, s);
        let f = WrappedDenoiser::exact(g, WrapMode::Direct);
        let out = f.apply(&y).unwrap();
        let raw = out.sub(&x).unwrap().norm_sq();
        let normalized = gz.sub(&xt).unwrap().norm_sq();
        prop_assert!((raw - s.std * s.std * normalized).abs() <= 1e-10 * raw);
        let q = q_value(&gz, &xt).unwrap();
        prop_assert!((raw - s.std * s.std * 10f64.powf(-q / 10.0)).abs() <= 1e-10 * raw);
        let p = psnr(&out, &x, 1.0).unwrap();
        prop_assert!((p - decomposed_psnr(q, s.std, x.len(), 1.0)).abs() <= 1e-9);
    }

    #[test]
    fn normalized_noise_is_rescaled_noise(x in instance(), seed in 0u64..1000) {
        let mut rng = substream(seed, 1);
        let y = normeq::noise::corrupt(&x, normeq::noise::NoiseModel::gaussian(30.0), &mut rng).unwrap();
        let s = stats(&y).unwrap();
        let (yt, _) = t_ne(&y).unwrap();
        let delta = yt.values.sub(&matched_target(&x, s)).unwrap();
        for ((d, yv), xv) in delta.values().iter().zip(y.values()).zip(x.values()) {
            prop_assert!((d - (yv - xv) / s.std).abs() <= 1e-12);
        }
    }

    #[test]
    fn inpainting_keeps_measurements(x in instance(), fraction in 0.0f64..1.0, seed in 0u64..100) {
        let mut rng = substream(seed, 2);
        let p = make_inpainting_mask(x.shape(), fraction, &mut rng).unwrap();
        let cfg = SamplerConfig { t_max: 40, ..SamplerConfig::inpainting() };
        let g = catalog(4).unwrap().remove(2);
        let r = inpaint(&g, &x, &p, &cfg, &mut rng).unwrap();
        prop_assert_eq!(p.project(&r.trajectory.xhat).unwrap(), p.project(&x).unwrap());
    }
}

#[test]
fn none_labelled_backbones_show_a_defect() {
    let mut rng = substream(5, 5);
    let y = Instance::new(Shape::gray(16, 16), (0..256).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).unwrap();
    for g in catalog(6).unwrap() {
        let class = g.descriptor().class;
        if matches!(class, EquivarianceClass::None | EquivarianceClass::ShiftOnly | EquivarianceClass::SeOnly) {
            let worst = [(2.0, 0.0), (1.0, 0.2), (0.6, -0.1)]
                .iter()
                .map(|&(a, b)| ne_defect(g.as_ref(), &y, a, b).unwrap())
                .fold(0.0, f64::max);
            assert!(worst > 1e-3, "{} labelled {class} has defect {worst}", g.descriptor().name);
        }
    }
}

#[test]
fn untrained_patch_mlp_is_not_ne_until_wrapped() {
    let g = catalog(7).unwrap().remove(7);
    let y = Instance::new(Shape::gray(16, 16), (0..256).map(|k| ((k * 31) % 17) as f64 / 17.0).collect()).unwrap();
    assert!(ne_defect(g.as_ref(), &y, 1.4, 0.1).unwrap() > 1e-3);
    let f = WrappedDenoiser::exact(g, WrapMode::Direct);
    assert!(ne_defect(&f, &y, 1.4, 0.1).unwrap() <= 1e-10);
}

#[test]
fn random_ne_stacks_compose_exactly() {
    let mut rng = substream(8, 8);
    let y = Instance::new(Shape::gray(9, 7), (0..63).map(|k| ((k * 13) % 10) as f64 / 10.0).collect()).unwrap();
    for _ in 0..10 {
        let net: Arc<dyn Backbone> = Arc::new(NeArchStack::random(1, 6, &mut rng).unwrap());
        assert!(ne_defect(net.as_ref(), &y, 1.3, -0.2).unwrap() <= 1e-9);
    }
}

//! Losses, soft-NE augmentation, Adam, hand-written gradients for the patch
//! MLP (through any wrapper mode) and the training loop.

use rand::Rng;

use crate::backbones::{MlpGrads, PatchMlpParams};
use crate::corpus::sample_patch;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::noise::{corrupt, NoiseKind, NoiseModel};
use crate::rng::{substream, StreamRng};
use crate::wrapper::{normalize, WrapMode, WrappedDenoiser};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Sum of squared errors.
    Mse,
    /// Sum of absolute errors.
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Regress onto the clean patch.
    Supervised,
    /// Regress onto a second, independently corrupted copy.
    Noise2Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    HalveEvery(usize),
}

impl LrSchedule {
    pub fn rate(&self, base: f64, step: usize) -> f64 {
        match *self {
            Self::Constant => base,
            Self::HalveEvery(k) if k > 0 => base * 0.5f64.powi((step / k) as i32),
            Self::HalveEvery(_) => base,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Training noise level in 8-bit units.
    pub sigma_train: f64,
    pub noise: NoiseKind,
    /// Side of the square training crop (the training instance).
    pub patch_size: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub loss: LossKind,
    pub objective: Objective,
    pub softne: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma_train: 25.0,
            noise: NoiseKind::Gaussian,
            patch_size: 32,
            batch: 4,
            steps: 2000,
            lr: 1e-3,
            schedule: LrSchedule::HalveEvery(400),
            loss: LossKind::Mse,
            objective: Objective::Supervised,
            softne: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Halve the rate five times over the run.
    pub fn default_schedule(steps: usize) -> LrSchedule {
        LrSchedule::HalveEvery((steps / 5).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.batch == 0 {
            return Err(Error::InvalidParameter("patch size and batch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.sigma_train >= 0.0) {
            return Err(Error::InvalidParameter("learning rate must be > 0 and sigma >= 0".into()));
        }
        Ok(())
    }
}

/// Patch MLP plus the wrapper it is trained (and evaluated) inside.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainableModel {
    pub params: PatchMlpParams,
    pub mode: WrapMode,
    pub epsilon: f64,
}

impl TrainableModel {
    pub fn new(params: PatchMlpParams, mode: WrapMode, epsilon: f64) -> Self {
        Self { params, mode, epsilon }
    }

    /// Frozen evaluation view.
    pub fn denoiser(&self) -> Result<WrappedDenoiser> {
        WrappedDenoiser::new(std::sync::Arc::new(self.params.clone()), self.mode, self.epsilon)
    }

    pub fn predict(&self, y: &Instance) -> Result<Instance> {
        self.denoiser()?.apply(y)
    }
}

pub fn loss(pred: &Instance, target: &Instance, kind: LossKind) -> Result<f64> {
    pred.check_same_shape(target)?;
    let it = pred.values().iter().zip(target.values());
    Ok(match kind {
        LossKind::Mse => it.map(|(p, t)| (p - t) * (p - t)).sum(),
        LossKind::L1 => it.map(|(p, t)| (p - t).abs()).sum(),
    })
}

fn loss_grad(pred: &Instance, target: &Instance, kind: LossKind) -> Vec<f64> {
    pred.values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| match kind {
            LossKind::Mse => 2.0 * (p - t),
            LossKind::L1 if p > t => 1.0,
            LossKind::L1 if p < t => -1.0,
            LossKind::L1 => 0.0,
        })
        .collect()
}

/// Apply the same `(alpha, mu)` orbit element to a target/input pair.
pub fn softne_apply(x: &Instance, y: &Instance, alpha: f64, mu: f64) -> (Instance, Instance) {
    (x.affine(alpha, mu), y.affine(alpha, mu))
}

/// `alpha ~ U(0,1)`, `mu ~ U(0,1)`, shared by both images.
pub fn softne_augment<R: Rng + ?Sized>(x: &Instance, y: &Instance, rng: &mut R) -> (Instance, Instance) {
    let alpha = rng.random::<f64>();
    let mu = rng.random::<f64>();
    softne_apply(x, y, alpha, mu)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} parameters", params.len()),
            actual: format!("{} gradients, {} moments", grads.len(), state.m.len()),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step: state.t as usize, reason: "divergence".into() });
    }
    state.t += 1;
    let (b1, b2) = (AdamState::BETA1, AdamState::BETA2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + AdamState::EPS);
    }
    Ok(())
}

/// Loss and exact parameter gradient for one `(input, target)` pair, with
/// the chain rule through the model's wrapper. The wrapper's statistics
/// depend only on the input, so they are constants for the parameters.
pub fn backprop_patch_mlp(
    model: &TrainableModel,
    input: &Instance,
    target: &Instance,
    kind: LossKind,
) -> Result<(f64, MlpGrads)> {
    input.check_same_shape(target)?;
    let p = &model.params;
    let mut grads = MlpGrads::zeros_like(p);
    let (pred, tape, backbone_in, dscale) = match model.mode {
        WrapMode::None => {
            let (out, tape) = p.forward_taped(input)?;
            (out, tape, input.clone(), 1.0)
        }
        WrapMode::InputOnly => {
            let n = normalize(input, model.epsilon)?;
            let (out, tape) = p.forward_taped(&n.z)?;
            (out, tape, n.z, 1.0)
        }
        WrapMode::Direct => {
            let n = normalize(input, model.epsilon)?;
            if n.constant {
                let pred = input.map(|_| n.mu);
                return Ok((loss(&pred, target, kind)?, grads));
            }
            let (g, tape) = p.forward_taped(&n.z)?;
            (g.map(|v| n.scale * v + n.mu), tape, n.z, n.scale)
        }
        WrapMode::Residual => {
            let n = normalize(input, model.epsilon)?;
            if n.constant {
                return Ok((loss(input, target, kind)?, grads));
            }
            let (h, tape) = p.forward_taped(&n.z)?;
            (input.zip_with(&h, |y, r| y - n.scale * r)?, tape, n.z, -n.scale)
        }
    };
    let l = loss(&pred, target, kind)?;
    let dout = backbone_in.with_values(loss_grad(&pred, target, kind).into_iter().map(|g| g * dscale).collect())?;
    p.backward_taped(&backbone_in, &tape, &dout, &mut grads)?;
    Ok((l, grads))
}

/// One training example; `weight` multiplies its loss.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: Instance,
    pub target: Instance,
    pub weight: f64,
}

/// Draw one batch: crop, corrupt (twice for Noise2Noise), optionally
/// augment along the affine orbit.
pub fn draw_batch<R: Rng + ?Sized>(corpus: &[Instance], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<Sample>> {
    let noise = NoiseModel { kind: cfg.noise, sigma: cfg.sigma_train };
    (0..cfg.batch)
        .map(|_| {
            let x = sample_patch(corpus, cfg.patch_size, rng)?;
            let y = corrupt(&x, noise, rng)?;
            let target = match cfg.objective {
                Objective::Supervised => x,
                Objective::Noise2Noise => corrupt(&x, noise, rng)?,
            };
            let (target, input) = if cfg.softne { softne_augment(&target, &y, rng) } else { (target, y) };
            Ok(Sample { input, target, weight: 1.0 })
        })
        .collect()
}

/// Owns a model and its optimizer state.
pub struct Trainer {
    pub model: TrainableModel,
    adam: AdamState,
    loss: LossKind,
    step: usize,
}

impl Trainer {
    pub fn new(model: TrainableModel, loss: LossKind) -> Self {
        let n = model.params.flat().len();
        Self { model, adam: AdamState::new(n), loss, step: 0 }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Mean weighted loss over the batch, then one Adam update on its
    /// gradient.
    pub fn step(&mut self, batch: &[Sample], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let mut total = MlpGrads::zeros_like(&self.model.params);
        let mut total_loss = 0.0;
        for s in batch {
            let (l, mut g) = backprop_patch_mlp(&self.model, &s.input, &s.target, self.loss)?;
            g.scale(s.weight);
            total.add_assign(&g);
            total_loss += s.weight * l;
        }
        let k = 1.0 / batch.len() as f64;
        total.scale(k);
        let mean_loss = total_loss * k;
        if !mean_loss.is_finite() {
            return Err(Error::Divergence { step: self.step, reason: "non-finite loss".into() });
        }
        adam_step(self.model.params.flat_mut(), &total.0, &mut self.adam, lr)
            .map_err(|_| Error::Divergence { step: self.step, reason: "non-finite gradient".into() })?;
        self.step += 1;
        Ok(mean_loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainableModel,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

/// Stream used by [`train`] for patch sampling and noise.
pub fn training_stream(seed: u64) -> StreamRng {
    substream(seed, 0x7EA1)
}

pub fn train(model: TrainableModel, corpus: &[Instance], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("training corpus is empty".into()));
    }
    cfg.validate()?;
    let mut rng = training_stream(cfg.seed);
    let mut trainer = Trainer::new(model, cfg.loss);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = draw_batch(corpus, cfg, &mut rng)?;
        losses.push(trainer.step(&batch, cfg.schedule.rate(cfg.lr, step))?);
    }
    Ok(TrainOutcome { model: trainer.model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::{Activation, Prediction};
    use crate::instance::Shape;

    fn inst(v: &[f64]) -> Instance {
        Instance::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let a = inst(&[0.5, 1.5]);
        assert_eq!(loss(&a, &a, LossKind::Mse).unwrap(), 0.0);
        assert_eq!(loss(&inst(&[1.0, 0.0]), &inst(&[0.0, 1.0]), LossKind::Mse).unwrap(), 2.0);
        assert_eq!(loss(&inst(&[1.0, 0.0]), &inst(&[0.0, 1.0]), LossKind::L1).unwrap(), 2.0);
        assert!(loss(&a, &inst(&[1.0]), LossKind::Mse).is_err());
    }

    #[test]
    fn softne_examples() {
        let x = inst(&[0.0, 1.0]);
        let y = inst(&[0.2, 0.9]);
        assert_eq!(softne_apply(&x, &y, 1.0, 0.0), (x.clone(), y.clone()));
        let (x2, _) = softne_apply(&x, &y, 0.5, 0.25);
        assert_eq!(x2.values(), &[0.25, 0.75]);
    }

    #[test]
    fn softne_draw_is_one_orbit_element() {
        let x = inst(&[0.0, 1.0, 0.5]);
        let y = inst(&[0.1, 0.8, 0.3]);
        let mut rng = substream(3, 1);
        for _ in 0..100 {
            let (x2, y2) = softne_augment(&x, &y, &mut rng);
            let alpha = x2.values()[1] - x2.values()[0];
            let mu = x2.values()[0];
            assert!((0.0..1.0).contains(&alpha) && (0.0..1.0).contains(&mu));
            for (a, b) in y2.values().iter().zip(y.values()) {
                assert!((a - (alpha * b + mu)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.moments(), (&[0.0, 0.0][..], &[0.0, 0.0][..]));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        // m_hat = 1, v_hat = 1: step = 0.1 / (1 + 1e-8)
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut p = vec![1.0];
        let err = adam_step(&mut p, &[f64::NAN], &mut AdamState::new(1), 0.1).unwrap_err();
        assert!(err.to_string().contains("divergence"));
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let params = PatchMlpParams::zeros(2, 3, Prediction::Residual, Activation::Relu).unwrap();
        let model = TrainableModel::new(params, WrapMode::None, 0.0);
        let y = Instance::new(Shape::gray(2, 2), vec![0.1, 0.5, 0.2, 0.7]).unwrap();
        let (l, g) = backprop_patch_mlp(&model, &y, &y, LossKind::Mse).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_steps_leave_parameters_alone() {
        let mut rng = substream(1, 1);
        let params = PatchMlpParams::init(4, 8, Prediction::Residual, Activation::Relu, &mut rng).unwrap();
        let model = TrainableModel::new(params, WrapMode::Direct, 1e-5);
        let corpus = vec![Instance::filled(Shape::gray(8, 8), 0.5).unwrap()];
        let cfg = TrainConfig { steps: 0, patch_size: 8, ..TrainConfig::default() };
        let out = train(model.clone(), &corpus, &cfg).unwrap();
        assert_eq!(out.model, model);
        assert!(out.losses.is_empty());
        assert!(train(model, &[], &cfg).is_err());
    }

    #[test]
    fn schedule_halves() {
        let s = LrSchedule::HalveEvery(10);
        assert_eq!(s.rate(1.0, 9), 1.0);
        assert_eq!(s.rate(1.0, 10), 0.5);
        assert_eq!(s.rate(1.0, 35), 0.125);
        assert_eq!(LrSchedule::Constant.rate(0.3, 1000), 0.3);
    }
}

use std::path::PathBuf;

use normeq::backbones::{Activation, PatchMlpParams, Prediction};
use normeq::noise::NoiseKind;
use normeq::rng::substream;
use normeq::training::{self, LossKind, LrSchedule, Objective, TrainConfig, TrainableModel};
use normeq::wrapper::{WrapMode, DEFAULT_EPSILON};

use super::{load_corpus, Context};
use crate::error::CliError;
use crate::plot::{line_chart, Series};
use crate::row;

fn user(msg: String) -> CliError {
    CliError::User(msg)
}

pub fn train(mut ctx: Context) -> Result<PathBuf, CliError> {
    let cfg = &mut ctx.cfg;
    let corpus = load_corpus(cfg, 200, 1)?;
    let mode = WrapMode::parse(&cfg.get_str("variant", "direct"))?;
    let epsilon: f64 = cfg.get("epsilon", DEFAULT_EPSILON)?;
    let patch: usize = cfg.get("patch", 8)?;
    let hidden: usize = cfg.get("hidden", 64)?;
    let activation = match cfg.get_str("activation", "relu").as_str() {
        "relu" => Activation::Relu,
        "linear" => Activation::Linear,
        other => return Err(user(format!("unknown activation '{other}'"))),
    };
    let prediction = match cfg.get_str("prediction", "residual").as_str() {
        "residual" => Prediction::Residual,
        "clean" => Prediction::Clean,
        other => return Err(user(format!("unknown prediction '{other}'"))),
    };
    let init_seed: u64 = cfg.get("init_seed", ctx.seed)?;
    let defaults = TrainConfig::default();
    let steps: usize = cfg.get("steps", defaults.steps)?;
    let halve_every: usize = cfg.get("halve_every", (steps / 5).max(1))?;
    let tc = TrainConfig {
        sigma_train: cfg.get("sigma", defaults.sigma_train)?,
        noise: NoiseKind::parse(&cfg.get_str("noise", "gaussian"))?,
        patch_size: cfg.get("crop", defaults.patch_size)?,
        batch: cfg.get("batch", defaults.batch)?,
        steps,
        lr: cfg.get("lr", defaults.lr)?,
        schedule: if halve_every == 0 { LrSchedule::Constant } else { LrSchedule::HalveEvery(halve_every) },
        loss: match cfg.get_str("loss", "mse").as_str() {
            "mse" => LossKind::Mse,
            "l1" => LossKind::L1,
            other => return Err(user(format!("unknown loss '{other}'"))),
        },
        objective: match cfg.get_str("objective", "supervised").as_str() {
            "supervised" => Objective::Supervised,
            "n2n" | "noise2noise" => Objective::Noise2Noise,
            other => return Err(user(format!("unknown objective '{other}'"))),
        },
        softne: cfg.get_bool("softne", false)?,
        seed: ctx.seed,
    };
    tc.validate()?;
    let params = PatchMlpParams::init(patch, hidden, prediction, activation, &mut substream(init_seed, 0))?;
    let model = TrainableModel::new(params, mode, epsilon);

    let dir = ctx.run_dir("train")?;
    let out = training::train(model, &corpus, &tc)?;
    std::fs::write(dir.file("model.ckpt"), out.model.params.to_bytes())?;
    let mut csv = dir.csv("losses.csv", &["step", "lr", "loss"])?;
    for (step, &l) in out.losses.iter().enumerate() {
        row!(csv, step, tc.schedule.rate(tc.lr, step), l)?;
    }
    csv.finish()?;
    let points = out.losses.iter().enumerate().map(|(k, &l)| (k as f64, l.log10())).collect();
    dir.write_text("loss.svg", &line_chart("training loss", "step", "log10 batch loss", &[Series::new(mode.as_str(), points)]))?;
    Ok(dir.path().to_path_buf())
}

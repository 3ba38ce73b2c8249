use normeq::corpus::{generate_corpus, MixWeights};

use super::{Context, DEFAULT_MIX};
use crate::error::CliError;
use crate::{pgm, row};

pub fn gen_corpus(mut ctx: Context) -> Result<std::path::PathBuf, CliError> {
    let n: usize = ctx.cfg.get("n", 16)?;
    let size: usize = ctx.cfg.get("size", 64)?;
    let mix = MixWeights::parse(&ctx.cfg.get_str("mix", DEFAULT_MIX))?;
    if n == 0 {
        return Err(CliError::User("n must be at least 1".into()));
    }
    let images = generate_corpus(n, size, &mix, ctx.seed)?;
    let dir = ctx.run_dir("gen-corpus")?;
    let mut manifest = dir.csv("manifest.csv", &["index", "file", "kind", "sigma_x"])?;
    for (k, img) in images.iter().enumerate() {
        let name = format!("img_{k:05}.pgm");
        pgm::write(&dir.file(&name), &img.image)?;
        row!(manifest, k, name.as_str(), img.kind.label().as_str(), img.sigma_x)?;
    }
    manifest.finish()?;
    Ok(dir.path().to_path_buf())
}

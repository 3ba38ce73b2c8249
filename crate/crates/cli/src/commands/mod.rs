//! Command implementations. Each one resolves every setting it needs from
//! the [`RunConfig`] before creating its run directory, so a failed parse
//! leaves nothing behind.

mod analyze;
mod corpus;
mod sample;
mod sweep;
mod train;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use normeq::backbones::{catalog, Backbone, PatchMlpParams};
use normeq::corpus::{generate_corpus, MixWeights};
use normeq::wrapper::{WrapMode, WrappedDenoiser};
use normeq::Instance;

pub use analyze::{analyze_coverage, analyze_delta, analyze_jacobian, analyze_ne_defect, analyze_qdelta};
pub use corpus::gen_corpus;
pub use sample::{sample_denoise, sample_inpaint};
pub use sweep::sweep;
pub use train::train;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::RunDir;
use crate::pgm;

/// Settings and output root shared by every command.
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out_root: PathBuf,
}

impl Context {
    pub fn run_dir(&self, command: &str) -> Result<RunDir, CliError> {
        let dir = RunDir::create(&self.out_root, command, self.seed)?;
        dir.write_config(&self.cfg)?;
        Ok(dir)
    }
}

pub const DEFAULT_MIX: &str = "0.4,0.3,0.1,0.2";

/// Images named by `corpus` (a PGM file or a directory of them), otherwise
/// a generated synthetic corpus.
pub fn load_corpus(cfg: &mut RunConfig, default_n: usize, default_seed: u64) -> Result<Vec<Instance>, CliError> {
    if let Some(path) = cfg.raw("corpus").map(PathBuf::from) {
        return read_images(&path);
    }
    let n: usize = cfg.get("corpus_n", default_n)?;
    let size: usize = cfg.get("corpus_size", 64)?;
    let mix = MixWeights::parse(&cfg.get_str("corpus_mix", DEFAULT_MIX))?;
    let seed: u64 = cfg.get("corpus_seed", default_seed)?;
    Ok(generate_corpus(n, size, &mix, seed)?.into_iter().map(|s| s.image).collect())
}

fn read_images(path: &Path) -> Result<Vec<Instance>, CliError> {
    if path.is_file() {
        return Ok(vec![pgm::read(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::User(format!("cannot read corpus {}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::User(format!("no .pgm files in {}", path.display())));
    }
    files.iter().map(|f| pgm::read(f).map_err(CliError::from)).collect()
}

/// The backbone named by `checkpoint` or `backbone`, if either is set.
pub fn load_backbone(cfg: &mut RunConfig) -> Result<Option<Arc<dyn Backbone>>, CliError> {
    if let Some(path) = cfg.raw("checkpoint").map(PathBuf::from) {
        let bytes = std::fs::read(&path).map_err(|e| CliError::User(format!("cannot read checkpoint {}: {e}", path.display())))?;
        return Ok(Some(Arc::new(PatchMlpParams::from_bytes(&bytes)?)));
    }
    let Some(name) = cfg.raw("backbone").map(str::to_string) else {
        return Ok(None);
    };
    let seed: u64 = cfg.get("backbone_seed", 0)?;
    let all = catalog(seed)?;
    let names: Vec<String> = all.iter().map(|g| g.descriptor().name).collect();
    all.into_iter()
        .find(|g| g.descriptor().name == name)
        .map(Some)
        .ok_or_else(|| CliError::User(format!("unknown backbone '{name}'; available: {}", names.join(", "))))
}

/// Required backbone inside the wrapper selected by `variant`/`epsilon`.
pub fn load_denoiser(cfg: &mut RunConfig, default_epsilon: f64) -> Result<WrappedDenoiser, CliError> {
    let g = load_backbone(cfg)?.ok_or_else(|| CliError::User("set either checkpoint or backbone".into()))?;
    let mode = WrapMode::parse(&cfg.get_str("variant", "direct"))?;
    let epsilon: f64 = cfg.get("epsilon", default_epsilon)?;
    Ok(WrappedDenoiser::new(g, mode, epsilon)?)
}

/// Clean image from `image`, else image `index` of the corpus settings.
pub fn load_clean(cfg: &mut RunConfig) -> Result<Instance, CliError> {
    if let Some(path) = cfg.raw("image").map(PathBuf::from) {
        return Ok(pgm::read(&path)?);
    }
    let index: usize = cfg.get("index", 0)?;
    let images = load_corpus(cfg, index + 1, 2)?;
    images.get(index).cloned().ok_or_else(|| CliError::User(format!("index {index} outside a corpus of {}", images.len())))
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use normeq_cli::commands::{self, Context};
use normeq_cli::{CliError, RunConfig};

/// Declares an option group whose flags mirror config keys (`--corpus-n`
/// sets `corpus_n`).
macro_rules! flags {
    ($(#[$meta:meta])* $name:ident { $($(#[doc = $doc:literal])* $field:ident: $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Args, Debug)]
        struct $name {
            $($(#[doc = $doc])* #[arg(long)] $field: Option<$ty>,)*
        }

        impl $name {
            fn apply(&self, cfg: &mut RunConfig) {
                $(cfg.set_opt(stringify!($field), self.$field.as_ref());)*
            }
        }
    };
}

flags!(CorpusFlags {
    /// PGM file or directory of PGM files (default: generated corpus)
    corpus: String,
    corpus_n: usize,
    corpus_size: usize,
    /// Weights grf,voronoi,gradient,grating
    corpus_mix: String,
    corpus_seed: u64,
});

flags!(ModelFlags {
    /// Patch-MLP checkpoint written by `train`
    checkpoint: String,
    /// Built-in backbone by name
    backbone: String,
    backbone_seed: u64,
    /// none, direct, residual or input-only
    variant: String,
    epsilon: f64,
});

flags!(ImageFlags {
    /// Clean PGM image (default: an image of the generated corpus)
    image: String,
    /// Corpus index used when no image is given
    index: usize,
});

flags!(GenCorpusFlags {
    n: usize,
    size: usize,
    /// Weights grf,voronoi,gradient,grating
    mix: String,
});

flags!(TrainFlags {
    /// none, direct, residual or input-only
    variant: String,
    epsilon: f64,
    patch: usize,
    hidden: usize,
    /// relu or linear
    activation: String,
    /// residual or clean
    prediction: String,
    init_seed: u64,
    /// Training noise level in 8-bit units
    sigma: f64,
    noise: String,
    /// Side of the square training crop
    crop: usize,
    batch: usize,
    steps: usize,
    lr: f64,
    /// Halve the learning rate every k steps (0: constant)
    halve_every: usize,
    /// mse or l1
    loss: String,
    /// supervised or n2n
    objective: String,
    softne: bool,
});

flags!(SweepFlags {
    /// Comma-separated test noise levels
    sigmas: String,
    noise: String,
});

flags!(DeltaFlags {
    sigmas: String,
    patches: usize,
    patch: usize,
    bins: usize,
});

flags!(CoverageFlags {
    /// Test levels (columns)
    sigmas: String,
    /// Training levels (rows), default: the test levels
    train_sigmas: String,
    patches: usize,
    patch: usize,
});

flags!(QdeltaFlags {
    sigmas: String,
    patches: usize,
    patch: usize,
    bins: usize,
    min_count: usize,
});

flags!(NeDefectFlags {
    /// Patch-MLP checkpoint (default: every built-in backbone)
    checkpoint: String,
    backbone: String,
    backbone_seed: u64,
    /// Comma-separated wrapper variants
    variants: String,
    epsilon: f64,
    probes: usize,
    probe_size: usize,
    sigma: f64,
    trials: usize,
});

flags!(JacobianFlags {
    /// Side of the crop the Jacobian is taken on
    size: usize,
    sigma: f64,
    /// Comma-separated output indices
    rows: String,
});

flags!(DenoiseFlags {
    /// Noise added to the clean image, 8-bit units
    sigma: f64,
    sigma_l: f64,
    h0: f64,
    t_max: usize,
});

flags!(InpaintFlags {
    /// Share of observed pixels
    fraction: f64,
    sigma0: f64,
    sigma_l: f64,
    h0: f64,
    beta: f64,
    t_max: usize,
});

#[derive(Parser, Debug)]
#[command(name = "normeq", version, about = "Normalization-equivariant denoising toolkit")]
struct Cli {
    /// key = value file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed (fallback: NE_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parent directory of the run directories
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic PGM corpus and its manifest
    GenCorpus(#[command(flatten)] GenCorpusFlags),
    /// Train a patch MLP, bare or inside a wrapper
    Train {
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Score a denoiser across test noise levels
    Sweep {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        sweep: SweepFlags,
    },
    /// Difficulty, coverage, Q, equivariance and Jacobian diagnostics
    #[command(subcommand)]
    Analyze(Analyze),
    /// Iterative denoiser-driven sampling
    #[command(subcommand)]
    Sample(Sample),
}

#[derive(Subcommand, Debug)]
enum Analyze {
    Delta {
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: DeltaFlags,
    },
    Coverage {
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: CoverageFlags,
    },
    Qdelta {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: QdeltaFlags,
    },
    NeDefect {
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: NeDefectFlags,
    },
    Jacobian {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        image: ImageFlags,
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: JacobianFlags,
    },
}

#[derive(Subcommand, Debug)]
enum Sample {
    /// Residual-stopped denoising of a noisy copy of a clean image
    Denoise {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        image: ImageFlags,
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: DenoiseFlags,
    },
    /// Random-pixel inpainting
    Inpaint {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        image: ImageFlags,
        #[command(flatten)]
        corpus: CorpusFlags,
        #[command(flatten)]
        flags: InpaintFlags,
    },
}

type Runner = fn(Context) -> Result<PathBuf, CliError>;

/// Applies the command's flags and returns its config name and runner.
fn select(command: &Command, cfg: &mut RunConfig) -> (&'static str, Runner) {
    match command {
        Command::GenCorpus(f) => {
            f.apply(cfg);
            ("gen-corpus", commands::gen_corpus)
        }
        Command::Train { corpus, train } => {
            corpus.apply(cfg);
            train.apply(cfg);
            ("train", commands::train)
        }
        Command::Sweep { model, corpus, sweep } => {
            model.apply(cfg);
            corpus.apply(cfg);
            sweep.apply(cfg);
            ("sweep", commands::sweep)
        }
        Command::Analyze(a) => match a {
            Analyze::Delta { corpus, flags } => {
                corpus.apply(cfg);
                flags.apply(cfg);
                ("analyze-delta", commands::analyze_delta)
            }
            Analyze::Coverage { corpus, flags } => {
                corpus.apply(cfg);
                flags.apply(cfg);
                ("analyze-coverage", commands::analyze_coverage)
            }
            Analyze::Qdelta { model, corpus, flags } => {
                model.apply(cfg);
                corpus.apply(cfg);
                flags.apply(cfg);
                ("analyze-qdelta", commands::analyze_qdelta)
            }
            Analyze::NeDefect { corpus, flags } => {
                corpus.apply(cfg);
                flags.apply(cfg);
                ("analyze-ne-defect", commands::analyze_ne_defect)
            }
            Analyze::Jacobian { model, image, corpus, flags } => {
                model.apply(cfg);
                image.apply(cfg);
                corpus.apply(cfg);
                flags.apply(cfg);
                ("analyze-jacobian", commands::analyze_jacobian)
            }
        },
        Command::Sample(s) => match s {
            Sample::Denoise { model, image, corpus, flags } => {
                model.apply(cfg);
                image.apply(cfg);
                corpus.apply(cfg);
                flags.apply(cfg);
                ("sample-denoise", commands::sample_denoise)
            }
            Sample::Inpaint { model, image, corpus, flags } => {
                model.apply(cfg);
                image.apply(cfg);
                corpus.apply(cfg);
                flags.apply(cfg);
                ("sample-inpaint", commands::sample_inpaint)
            }
        },
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.raw("seed") {
        return s.parse().map_err(|_| CliError::User(format!("bad seed '{s}' in config")));
    }
    match std::env::var("NE_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::User(format!("bad NE_SEED '{s}'"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::new(),
    };
    let (name, runner) = select(&cli.command, &mut cfg);
    if let Some(c) = cfg.raw("command") {
        if c != name {
            return Err(CliError::User(format!("config is for command '{c}', not '{name}'")));
        }
    }
    cfg.set("command", name);
    let seed = resolve_seed(cli.seed, &cfg)?;
    cfg.set("seed", seed);
    runner(Context { cfg, seed, out_root: cli.out })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(dir)) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(2),
    }
}

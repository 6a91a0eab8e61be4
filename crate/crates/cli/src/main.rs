//! `ooaf` command-line driver.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use render::View;

/// Exit code for bad input: usage errors, malformed files, inconsistent data.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ooaf::Error),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ooaf::Error> for CliError {
    fn from(e: ooaf::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "ooaf", version, about = "One-shot object-to-object affordance grounding")]
pub struct Cli {
    /// Global random seed.
    #[arg(long, global = true, env = "OOAF_SEED")]
    pub seed: Option<u64>,

    /// Worker threads; more than one enables parallel evaluation and restarts.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "ooaf-out")]
    pub out: PathBuf,

    /// JSON run configuration (`seed`, `model`, `solve` sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More progress output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Full,
    Compact,
    Small,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Attention {
    Joint,
    SelfOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Features {
    Parts,
    None,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset of annotated object pairs.
    GenSynth {
        #[arg(long, default_value_t = 2048)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        eval_per_category: usize,
        /// Relative part-size perturbation of held-out instances.
        #[arg(long, default_value_t = 0.3)]
        perturbation: f64,
        #[arg(long, default_value_t = 32)]
        feature_dim: usize,
        #[arg(long, default_value_t = 0.05)]
        feature_noise: f64,
        #[arg(long, value_enum, default_value_t = Features::Parts)]
        features: Features,
        /// Label bandwidth in normalized units.
        #[arg(long, default_value_t = 0.06)]
        sigma: f64,
        /// Categories to generate (default: all).
        #[arg(long, value_delimiter = ',')]
        verbs: Vec<String>,
    },
    /// Fuse per-view feature maps onto a point cloud.
    Fuse {
        /// Cloud whose points receive features.
        #[arg(long)]
        points: PathBuf,
        /// Camera JSON descriptor (repeatable).
        #[arg(long = "camera", required = true)]
        cameras: Vec<PathBuf>,
        /// Truncation distance.
        #[arg(long, default_value_t = 0.02)]
        mu: f64,
    },
    /// Propagate contact points into dense affordance labels.
    Annotate {
        #[arg(long)]
        cloud: PathBuf,
        /// JSON list of `[x, y, z]` contacts, or `{"contacts": [...]}`.
        #[arg(long)]
        contacts: PathBuf,
        /// Category name or id.
        #[arg(long)]
        category: String,
        /// Bandwidth in normalized units.
        #[arg(long, default_value_t = 0.06)]
        sigma: f64,
        #[arg(long, default_value_t = 5)]
        channels: usize,
        /// Largest allowed distance from a contact to its nearest cloud point.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Train on the one training pair of every category.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Full)]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_enum)]
        attention: Option<Attention>,
        /// Defaults to the dimension found in the training data.
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        no_augment: bool,
    },
    /// Predict affordance maps for an object pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out pairs of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate under spherical occlusion at several levels.
    OccludeEval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Removed fractions in percent.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
        levels: Vec<u32>,
    },
    /// Solve for the source pose that best satisfies a constraint spec.
    OptimizePose {
        /// Built-in spec name or path to a spec JSON.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// Affordance channel as category name or id (default: the spec's task).
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Color a cloud by one affordance channel and render a heatmap image.
    Render {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, value_enum, default_value_t = View::Front)]
        view: View,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Write the patch tokens of every dataset pair as text.
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a small network.
    GradCheck {
        #[arg(long, default_value_t = 48)]
        points: usize,
    },
}

pub struct Ctx {
    pub seed: u64,
    /// Seed given by flag, environment or config file.
    pub seed_given: bool,
    pub parallel: bool,
    pub out: PathBuf,
    pub config: RunConfig,
    pub verbose: u8,
    pub quiet: bool,
}

impl Ctx {
    pub fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    pub fn debug(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 && !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn setup(cli: &Cli) -> Result<Ctx, CliError> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed);
    Ok(Ctx {
        seed: seed.unwrap_or(0),
        seed_given: seed.is_some(),
        parallel: cli.threads > 1,
        out: cli.out.clone(),
        config,
        verbose: cli.verbose,
        quiet: cli.quiet,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    let result = setup(&cli).and_then(|ctx| commands::run(&cli.command, &ctx));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

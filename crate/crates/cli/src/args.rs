use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use disentangle_core::eval::SuccessRule;
use disentangle_core::MaskMode;

#[derive(Debug, Parser)]
#[command(name = "disentangle", version, about = "Compose, refine, render and evaluate filter-space editing directions")]
pub struct Cli {
    /// `builtin:toy` (the default) or a model package directory.
    #[arg(long, global = true)]
    pub model: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean filter vector over `n` random samples, cached in the output directory.
    AvgVector {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Direction from an exemplar manifest.
    Compose(ComposeArgs),
    /// Plain renders of `n` consecutive seeds.
    Sample {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders of `n` consecutive seeds with a direction applied at `strength`.
    Edit {
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long, allow_hyphen_values = true)]
        strength: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rescales a direction by mask importance and renormalizes.
    MaskApply(MaskApplyArgs),
    /// Strength range on one seed within which the detector keeps passing.
    Calibrate {
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        plugin_detector: Option<String>,
        #[command(flatten)]
        calibration: CalibrationArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identity, success, lost and found over `n` seeds starting at `seed`.
    Evaluate {
        #[arg(long)]
        direction: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric change of each snapshot relative to the first.
    Track {
        /// Directory of direction files (taken in file-name order) or a session log.
        #[arg(long)]
        snapshots: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the HTTP session service.
    Serve {
        /// TOML configuration; `DISENTANGLE_*` variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Serves a built-in plugin over stdin/stdout.
    Plugin {
        #[arg(value_enum)]
        kind: BuiltinPlugin,
    },
    /// Writes the built-in toy generator as a model package.
    ExportToy {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Text manifest: a `model <hash>` line, then `<seed> <positive|negative> [weight]` rows.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "composed")]
    pub name: String,
    /// Scale the result to unit length.
    #[arg(long)]
    pub normalize: bool,
    /// Samples in the average vector used when there are no negatives.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where cached average vectors live; defaults to the output directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskApplyArgs {
    #[arg(long)]
    pub direction: PathBuf,
    /// Mask file, optionally suffixed with `:preserve`, `:discard` or `:off`.
    #[arg(long = "mask", required = true)]
    pub masks: Vec<String>,
    /// Feature maps come from this seed instead of each mask's `created_from`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value = "masked")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    #[arg(long, default_value_t = 0.1)]
    pub initial: f64,
    #[arg(long, default_value_t = 64.0)]
    pub cap: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    #[arg(long)]
    pub plugin_detector: Option<String>,
    #[arg(long)]
    pub plugin_embedder: Option<String>,
    #[arg(long)]
    pub plugin_classifier: Option<String>,
    /// Attribute name or index.
    #[arg(long)]
    pub target_attr: String,
    #[arg(long, value_enum, default_value_t = Rule::Present)]
    pub success_rule: Rule,
    /// Let the detector and embedder be the same model.
    #[arg(long)]
    pub allow_shared_model: bool,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rule {
    Present,
    NewlyIntroduced,
}

impl From<Rule> for SuccessRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Present => SuccessRule::Present,
            Rule::NewlyIntroduced => SuccessRule::NewlyIntroduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinPlugin {
    ToyDetector,
    ToyEmbedder,
    ToyClassifier,
}

pub fn parse_mode(s: &str) -> Option<MaskMode> {
    match s {
        "off" => Some(MaskMode::Off),
        "preserve" => Some(MaskMode::Preserve),
        "discard" => Some(MaskMode::Discard),
        _ => None,
    }
}

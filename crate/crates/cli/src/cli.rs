use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tcf", version, about = "Trustworthiness evaluation of phishing detectors")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; missing keys take their defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Restrict written reports to one format (default: all)
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads (default: one per core). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a prediction log for duplicate keys, broken perturbation links
    /// and gaps in run numbering
    Validate { log: PathBuf },

    /// Normalize and deduplicate an email corpus
    Preprocess {
        corpus: PathBuf,
    },

    /// Split a corpus into train/val/test, undersampling the training split
    Split { corpus: PathBuf },

    /// Generate similarity-gated perturbations of a corpus
    Perturb {
        corpus: PathBuf,

        /// Tab-separated `word<TAB>synonym` lines
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },

    /// Fit per-group temperatures on the validation split and print them
    Calibrate { log: PathBuf },

    /// Compute the full trust report for a prediction log
    Evaluate {
        log: PathBuf,

        /// Report groups without perturbation pairs, dropping the R term
        #[arg(long)]
        allow_missing_robustness: bool,

        /// Accept groups with a single run (zero F1 variance)
        #[arg(long)]
        allow_single_run: bool,

        /// Skip bootstrap confidence intervals
        #[arg(long)]
        no_ci: bool,
    },

    /// Paired bootstrap test between two models, per dataset
    Compare {
        log: PathBuf,

        #[arg(long)]
        model_a: String,

        #[arg(long)]
        model_b: String,

        /// accuracy, precision, recall, f1 or ece
        #[arg(long, default_value = "f1")]
        statistic: String,
    },

    /// Write a synthetic prediction log
    Simulate(SimulateArgs),

    /// Re-render a JSON trust report as Markdown and CSV
    Report { report: PathBuf },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Profile JSON file: one profile or an array of profiles
    #[arg(long, conflicts_with = "paper_like", required_unless_present = "paper_like")]
    pub profile: Option<PathBuf>,

    /// Use the three built-in profiles
    #[arg(long)]
    pub paper_like: bool,

    /// Test samples per dataset
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Runs per sample
    #[arg(long, default_value_t = 5)]
    pub k: usize,

    /// Comma-separated dataset names
    #[arg(long, value_delimiter = ',', conflicts_with = "paper_datasets")]
    pub datasets: Vec<String>,

    /// Use the five built-in corpus names, which carry the profiles'
    /// per-dataset offsets
    #[arg(long)]
    pub paper_datasets: bool,

    /// Validation samples per run as a fraction of --n
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,

    /// Emit perturbed records in every run instead of run 1 only
    #[arg(long)]
    pub perturb_all_runs: bool,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ulfsynth", version, about = "Synthetic training data, evaluation, ensembling and label QC for low-field brain MRI")]
pub struct Cli {
    /// Log filter, e.g. `info` or `ulfsynth_core=debug`.
    #[arg(long, global = true, default_value = "info", env = "ULFSYNTH_LOG")]
    pub log_level: String,
    /// Worker threads for per-subject work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic image/label pairs from the label maps of a manifest.
    Generate(GenerateArgs),
    /// Map label ids into a target scheme.
    Remap(RemapArgs),
    /// Score prediction sets against ground truth and rank them.
    Evaluate(EvaluateArgs),
    /// Fuse model predictions with a majority-vote recipe.
    Ensemble(EnsembleArgs),
    /// Label-alignment quality control.
    #[command(subcommand)]
    Qc(QcCommand),
    /// Run the QC review service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator config (TOML). Defaults to `generate.toml` in $ULFSYNTH_CONFIG_DIR, then built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest whose label maps drive generation.
    #[arg(long, required_unless_present = "replay")]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per subject.
    #[arg(long, default_value_t = 1)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    /// Overrides `seed.dataset_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disables the slice-thickness resampling stage.
    #[arg(long)]
    pub no_resolution: bool,
    /// Restricts generation to these subjects (repeatable).
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    /// Regenerates one sample from its `*_provenance.json`.
    #[arg(long, conflicts_with_all = ["manifest", "config", "seed", "no_resolution", "samples", "epoch"])]
    pub replay: Option<PathBuf>,
    /// Label map for `--replay`; defaults to the path recorded in the provenance.
    #[arg(long, requires = "replay")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RemapArgs {
    /// Target scheme: `lisa` or `lisa_plus`.
    #[arg(long, default_value = "lisa")]
    pub scheme: String,
    /// Source-id table (`source_id,source_name,target_id`); identity if absent.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Single label map to remap.
    #[arg(long, requires = "output", conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Remap every label map in a manifest; writes remapped maps and a new manifest to `--out`.
    #[arg(long, requires = "out")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Manifest providing subjects and ground-truth label maps.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `NAME=PATTERN`, where PATTERN contains `{subject_id}` (repeatable).
    #[arg(long = "submission", required = true)]
    pub submissions: Vec<String>,
    /// Scheme whose evaluated classes are scored.
    #[arg(long, default_value = "lisa")]
    pub scheme: String,
    /// Only use manifest entries with this ground-truth variant (`GT_HF` or `GT_LF`).
    #[arg(long)]
    pub gt_variant: Option<String>,
    /// `pooled` or `per-label`.
    #[arg(long, default_value = "pooled")]
    pub aggregation: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Recipe book (TOML). Defaults to `ensemble.toml` in $ULFSYNTH_CONFIG_DIR.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    /// Recipe to run.
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum QcCommand {
    /// Propose misregistered subjects from sentinel-structure agreement.
    Flag(QcFlagArgs),
    /// Set manifest QC status from the latest ratings, optionally subsetting.
    Apply(QcApplyArgs),
    /// Write the latest-rating view of a history file.
    Export(QcExportArgs),
    /// Append one rating to a history file.
    Rate(QcRateArgs),
}

#[derive(Debug, Args)]
pub struct QcFlagArgs {
    /// Manifest whose entries carry `prediction_path`; scores are Dice on the sentinel labels.
    #[arg(long, required_unless_present = "scores", conflicts_with = "scores")]
    pub manifest: Option<PathBuf>,
    /// Precomputed `subject_id,score` CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Sentinel label ids.
    #[arg(long, value_delimiter = ',', default_values_t = [4u32, 6])]
    pub sentinels: Vec<u32>,
    /// Fixed threshold instead of the automatic split.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Flag result JSON (readable by `serve --flags`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QcApplyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    /// `all`, `good` or `bad`.
    #[arg(long, default_value = "all")]
    pub select: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QcExportArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QcRateArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub subject: String,
    /// `good`, `bad` or `unrated`.
    #[arg(long)]
    pub rating: String,
    /// Affected structure name (repeatable).
    #[arg(long = "structure")]
    pub structures: Vec<String>,
    #[arg(long, default_value = "anonymous")]
    pub rater: String,
    #[arg(long, default_value = "")]
    pub note: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Rating history CSV; created on first rating.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Output of `qc flag`, shown as sentinel scores.
    #[arg(long)]
    pub flags: Option<PathBuf>,
    /// Built UI bundle served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

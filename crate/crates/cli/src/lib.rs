//! `ulfsynth` command-line driver.
//!
//! Exit codes: 0 success, 1 partial failure (some subjects failed, the rest
//! were written), 2 configuration or input error (nothing was attempted).

mod args;
mod commands;

use std::path::{Path, PathBuf};

pub use args::{
    Cli, Command, EnsembleArgs, EvaluateArgs, GenerateArgs, QcApplyArgs, QcCommand, QcExportArgs, QcFlagArgs,
    QcRateArgs, RemapArgs, ServeArgs,
};

/// Directory searched for default and relative config files.
pub const CONFIG_DIR_ENV: &str = "ULFSYNTH_CONFIG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ulfsynth_core::Error),
    #[error(transparent)]
    Serve(#[from] ulfsynth_qcserve::ServeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial { failed: usize },
}

impl Outcome {
    fn from_failures(failed: usize) -> Self {
        if failed == 0 {
            Outcome::Complete
        } else {
            Outcome::Partial { failed }
        }
    }
}

pub fn exit_code(result: &Result<Outcome, CliError>) -> u8 {
    match result {
        Ok(Outcome::Complete) => 0,
        Ok(Outcome::Partial { failed }) => {
            tracing::warn!(failed, "finished with failures");
            1
        }
        Err(CliError::Serve(ulfsynth_qcserve::ServeError::Io(_))) => 1,
        Err(_) => 2,
    }
}

pub fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(level).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {} worker threads: {e}", cli.threads)))?;
    }
    match cli.command {
        Command::Generate(a) => commands::generate::run(a),
        Command::Remap(a) => commands::remap::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::Ensemble(a) => commands::ensemble::run(a),
        Command::Qc(c) => commands::qc::run(c),
        Command::Serve(a) => commands::serve::run(a),
    }
}

/// Resolves a config file: an explicit path is used as given when it exists,
/// otherwise looked up in `$ULFSYNTH_CONFIG_DIR`; without one, `default_name`
/// in that directory is used if present.
pub(crate) fn resolve_config(explicit: Option<&Path>, default_name: &str) -> Result<Option<PathBuf>, CliError> {
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    match explicit {
        Some(p) if p.exists() => Ok(Some(p.to_path_buf())),
        Some(p) => match dir.map(|d| d.join(p)).filter(|c| p.is_relative() && c.exists()) {
            Some(found) => Ok(Some(found)),
            None => Err(CliError::Config(format!("config file {} not found", p.display()))),
        },
        None => Ok(dir.map(|d| d.join(default_name)).filter(|c| c.exists())),
    }
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

use std::path::{Path, PathBuf};

use anyhow::Context;
use scaforge::store::{load_config, ExperimentConfig};

/// A flag or environment value the user has to fix; exits with status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub enum Outcome {
    Success,
    /// The experiment ran but came out negative; the message is printed.
    Negative(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Creates `--out` if needed.
pub fn out_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// `--config` if given, else the built-in defaults. `--seed` overrides.
pub fn config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

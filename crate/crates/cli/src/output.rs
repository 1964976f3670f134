//! Output layout under the run directory, run manifests and summaries.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use drr_core::config::RunConfig;
use drr_core::jsonl::write_atomic;
use serde_json::Value;

pub fn traces_path(config: &RunConfig, dataset: &str) -> PathBuf {
    config
        .out_dir
        .join("traces")
        .join(format!("{dataset}.jsonl"))
}

pub fn outcomes_path(config: &RunConfig, dataset: &str) -> PathBuf {
    config
        .out_dir
        .join("outcomes")
        .join(format!("{dataset}.jsonl"))
}

pub fn train_corpus_path(config: &RunConfig) -> PathBuf {
    config.out_dir.join("dm_train.jsonl")
}

pub fn dev_corpus_path(config: &RunConfig) -> PathBuf {
    config.out_dir.join("dm_dev.jsonl")
}

pub fn model_path(config: &RunConfig) -> PathBuf {
    config.out_dir.join("critic.bin")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Writes `<out>/<command>.manifest.toml`: the resolved configuration,
/// loadable again with `--config`, preceded by comment lines for inputs
/// that have no config key.
pub fn write_manifest(config: &RunConfig, command: &str, notes: &[String]) -> Result<PathBuf> {
    ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(format!("{command}.manifest.toml"));
    let mut text = format!(
        "# drr {command} {}\n# rerun: drr {command} --config {}\n",
        env!("CARGO_PKG_VERSION"),
        path.display()
    );
    for note in notes {
        text.push_str(&format!("# {note}\n"));
    }
    text.push('\n');
    text.push_str(&config.to_toml());
    write_atomic(&path, text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

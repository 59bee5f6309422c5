//! Run directories and the provenance written into them.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use offmorl_core::experiments::config_hash;
use serde::Serialize;

pub const RUN_ROOT_VAR: &str = "OFFMORL_RUN_ROOT";
pub const CODE_VERSION: &str = concat!("offmorl ", env!("CARGO_PKG_VERSION"));

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub code_version: &'a str,
}

/// `out` if given, otherwise `$OFFMORL_RUN_ROOT/<prefix>-<hash prefix>` (root defaults to `runs`).
pub fn run_dir(out: Option<&Path>, prefix: &str, hash: &str) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| {
        let root = std::env::var_os(RUN_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| "runs".into());
        root.join(format!("{prefix}-{}", &hash[..12]))
    })
}

/// Creates `dir` and writes the resolved config and provenance. Returns the config hash.
pub fn open_run<C: Serialize>(dir: &Path, command: &str, config: &C, seed: u64) -> Result<String> {
    let hash = config_hash(config)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = toml::to_string_pretty(config).context("serializing the resolved config")?;
    write(dir.join("config.toml"), &text)?;
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            command,
            config_hash: &hash,
            seed,
            code_version: CODE_VERSION,
        },
    )?;
    Ok(hash)
}

pub fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

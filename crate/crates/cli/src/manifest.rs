use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::error::CliResult;

/// A file written by a run, with its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// File name, relative to the manifest's directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path, contents: &[u8]) -> Self {
        Self {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            bytes: contents.len() as u64,
            sha256: format!("{:x}", Sha256::digest(contents)),
        }
    }
}

/// Everything needed to re-run a command, plus what it produced.
///
/// `wall_clock_seconds` is the only field that differs between identical
/// runs; artifact hashes never cover the manifest itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub scheme: Option<String>,
    /// `[H, W, m, n]` where a single operator is involved.
    pub dims: Option<[usize; 4]>,
    pub sampling_ratio: Option<f64>,
    pub seed: u64,
    pub results: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: Command, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            scheme: None,
            dims: None,
            sampling_ratio: None,
            seed,
            results: serde_json::Value::Null,
            artifacts: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_slice(&crate::commands::read_file(path)?).map_err(akcs_core::Error::from)?)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(akcs_core::Error::from)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Writes `contents` to `path` and records it.
pub fn write_artifact(manifest: &mut RunManifest, path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents)?;
    manifest.artifacts.push(Artifact::of(path, contents));
    Ok(())
}

/// `<dir>/<stem>.manifest.json` for a file output.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

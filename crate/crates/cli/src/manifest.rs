//! Run manifests: the resolved configuration plus digests of every input,
//! written next to each produced artifact.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL: &str = "seqtag";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let data = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {}", path.display(), e)))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes: data.len() as u64,
        sha256: format!("{:x}", Sha256::digest(&data)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// Every setting with defaults filled in. Usable as `--config`.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &'static str,
        seed: u64,
        config: &C,
        inputs: &[&Path],
        outputs: Vec<PathBuf>,
    ) -> Result<Self, CliError> {
        Ok(RunManifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config: serde_json::to_value(config).expect("settings serialize"),
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e)))
    }
}

/// `model.sqtg` → `model.sqtg.manifest.json`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

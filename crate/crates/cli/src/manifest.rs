//! Run manifest: what was read, what was written, and with which settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

/// Overrides where relative output paths are written.
pub const OUT_DIR_ENV: &str = "VIBKIT_OUT_DIR";

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: &'static str,
    pub seed: u64,
    pub config: Config,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub summary: Value,
}

fn sha256_of(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs and outputs for one run. Outputs are hashed from disk
/// when the manifest is finished, so the hashes describe what was left
/// behind.
pub struct Recorder {
    out_dir: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out_dir: Option<PathBuf>) -> Self {
        Recorder {
            out_dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Where an output named `path` goes: relative paths land under the
    /// output-directory override when one is set.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Writes `contents` to the resolved output path, creating parent
    /// directories, and records it.
    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let target = self.output_path(path);
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&target, contents)
            .map_err(|e| CliError::Input(format!("{}: {e}", target.display())))?;
        self.outputs.push(target.clone());
        Ok(target)
    }

    pub fn finish(
        self,
        subcommand: &'static str,
        config: Config,
        summary: Value,
    ) -> Result<Manifest, CliError> {
        let entries = |paths: Vec<PathBuf>| -> Result<Vec<FileEntry>, CliError> {
            paths
                .into_iter()
                .map(|p| {
                    Ok(FileEntry {
                        sha256: sha256_of(&p)?,
                        path: p.display().to_string(),
                    })
                })
                .collect()
        };
        Ok(Manifest {
            subcommand,
            seed: config.seed,
            config,
            inputs: entries(self.inputs)?,
            outputs: entries(self.outputs)?,
            summary,
        })
    }
}

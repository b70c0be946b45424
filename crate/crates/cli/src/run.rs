//! Output directory handling and the `run.json` manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::GlobalArgs;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    global: &'a GlobalArgs,
    args: &'a A,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
}

/// Collects the files a command reads and writes.
pub struct Run {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
}

impl Run {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Path of an artifact in the output directory, recorded for the manifest.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.artifact(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn finish<A: Serialize>(self, command: &str, global: &GlobalArgs, args: &A) -> Result<()> {
        let digest = |paths: &[PathBuf], base: Option<&Path>| -> Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
                    Ok(FileDigest {
                        path: shown.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            global,
            args,
            inputs: digest(&self.inputs, None)?,
            artifacts: digest(&self.artifacts, Some(&self.dir))?,
        };
        let path = self.dir.join("run.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

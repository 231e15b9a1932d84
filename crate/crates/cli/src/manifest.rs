use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Written next to the outputs of every run that got past config checks.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub error: Option<String>,
    pub passed: bool,
}

/// Output directory of one command plus what it has produced so far.
pub struct RunDir {
    pub dir: PathBuf,
    pub outputs: Vec<String>,
    pub seeds: Vec<u64>,
    pub assertions: Vec<Assertion>,
}

impl RunDir {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, outputs: Vec::new(), seeds: Vec::new(), assertions: Vec::new() }
    }

    /// Buffered writer for `rel` under the run directory.
    pub fn create(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(rel.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

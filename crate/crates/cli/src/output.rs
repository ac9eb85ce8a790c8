//! Output directory bookkeeping and the per-run manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::{CliError, Command};

pub const MANIFEST: &str = "manifest.json";

/// Files written by one invocation, relative to its root.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            files: BTreeSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(rel.to_string());
        Ok(())
    }

    /// Runs one of the core writers into `rel`.
    pub fn emit(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> hrlab::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn json(&mut self, rel: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Writes `manifest.json` and returns every path written.
    pub fn finish(mut self, cfg: &ExperimentConfig, command: Command) -> Result<Vec<PathBuf>, CliError> {
        let files: Vec<&String> = self.files.iter().collect();
        let manifest = json!({
            "artifact": "hrlab",
            "version": hrlab::VERSION,
            "command": command.name(),
            "config": cfg.resolved,
            "files": files,
        });
        self.json(MANIFEST, &manifest)?;
        Ok(self.files.iter().map(|f| self.root.join(f)).collect())
    }
}

/// Whitespace-separated columns with a `# name …` header.
pub fn columns(names: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    hrlab::io::write_columns(&mut buf, names, rows)?;
    Ok(buf)
}

/// `null` for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

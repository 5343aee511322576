use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    kind: &'static str,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    model_hash: &'a str,
    artifacts: &'a [Artifact],
}

/// Output directory plus the list of files written into it.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    model_hash: String,
    artifacts: Vec<Artifact>,
}

impl Output {
    pub fn create(dir: &Path, command: &'static str, model_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            model_hash: model_hash.to_string(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, kind: &'static str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            kind,
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Records a file some other writer already put in the directory.
    pub fn record(&mut self, path: &Path, kind: &'static str) -> Result<()> {
        let bytes = fs::metadata(path)?.len();
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.artifacts.push(Artifact {
            path: rel.display().to_string(),
            kind,
            bytes,
        });
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let m = Manifest {
            command: self.command,
            model_hash: &self.model_hash,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}

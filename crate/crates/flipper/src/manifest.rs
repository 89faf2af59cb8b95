//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    /// `"ok"` or the error message.
    pub outcome: String,
    pub exit_code: i32,
    pub artifacts: Vec<Artifact>,
    /// Seconds since the Unix epoch; not covered by any checksum.
    pub created_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Paths whose current checksum differs from the manifest (or that are gone).
pub fn verify(root: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .artifacts
        .iter()
        .filter(|a| sha256_file(&root.join(&a.path)).map_or(true, |h| h != a.sha256))
        .map(|a| a.path.clone())
        .collect()
}

/// An output directory that records the checksum of every file written
/// through it.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    fn record(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        let sha256 = sha256_file(&path)?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256,
        });
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        io::write_json(&self.root.join(rel), value)?;
        self.record(rel)
    }

    pub fn jsonl<T: Serialize>(&mut self, rel: &str, items: &[T]) -> Result<PathBuf> {
        io::write_jsonl(&self.root.join(rel), items)?;
        self.record(rel)
    }

    pub fn csv<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<PathBuf> {
        io::write_csv(&self.root.join(rel), rows)?;
        self.record(rel)
    }

    /// CSV from pre-formatted cells, for tables whose columns depend on the run.
    pub fn table(&mut self, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.clone(),
            message: e.to_string(),
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.record(rel)
    }

    pub fn finish(self, command: &str, config_path: Option<&Path>, seed: u64, outcome: &Result<()>) -> Result<RunManifest> {
        let (outcome, exit_code) = match outcome {
            Ok(()) => (String::from("ok"), 0),
            Err(e) => (e.to_string(), e.exit_code()),
        };
        let manifest = RunManifest {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seed,
            out_dir: self.root.display().to_string(),
            outcome,
            exit_code,
            artifacts: self.artifacts,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        io::write_json(&self.root.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

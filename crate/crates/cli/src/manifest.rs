//! Run manifests written next to every set of outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Fully resolved configuration (e.g. the chosen bandwidth).
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub input_sha256: Option<String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, started: DateTime<Utc>) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            config: serde_json::Value::Null,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            input_sha256: None,
            started,
            finished: started,
            outputs: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = Utc::now();
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, m: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    m.outputs.push(name.into());
    Ok(())
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], m: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    m.outputs.push(name.into());
    Ok(())
}

pub fn write_table(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>], m: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    m.outputs.push(name.into());
    Ok(())
}

//! CSV tables and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};

/// One measurement in the long-format results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub study: String,
    pub variant: String,
    pub training_set: String,
    pub count: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub const RESULT_HEADER: &str = "study,variant,training_set,count,seed,metric,value";

/// Serializes rows as they arrive and flushes after each so a failed run
/// still leaves every completed measurement on disk.
pub struct CsvSink<T: Serialize> {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    rows: Vec<T>,
}

impl<T: Serialize> CsvSink<T> {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path: path.to_path_buf(), writer: csv::Writer::from_writer(BufWriter::new(file)), rows: Vec::new() })
    }

    pub fn push(&mut self, row: T) -> Result<()> {
        self.writer.serialize(&row).with_context(|| format!("writing {}", self.path.display()))?;
        self.writer.flush()?;
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[T] {
        &self.rows
    }

    pub fn finish(mut self) -> Result<(PathBuf, Vec<T>)> {
        self.writer.flush()?;
        Ok((self.path, self.rows))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub model_format_version: u32,
    /// Where the features came from, e.g. `hog-bitmaps`.
    pub feature_source: Option<String>,
    pub outputs: Vec<OutputDigest>,
    pub config: toml::Table,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model_format_version: smcae_core::smcae::MODEL_VERSION,
            feature_source: None,
            outputs: Vec::new(),
            config: toml::Table::try_from(cfg).expect("config serializes"),
        }
    }

    /// Records the digest of `path`, named relative to `root` when possible.
    pub fn add_output(&mut self, root: &Path, path: &Path) -> Result<()> {
        let name = path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned();
        self.outputs.push(OutputDigest { file: name, sha256: sha256_file(path)? });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_flush() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut sink = CsvSink::create(&path).unwrap();
        sink.push(ResultRow {
            study: "s".into(),
            variant: "smcae".into(),
            training_set: "real".into(),
            count: 3,
            seed: 1,
            metric: "f1".into(),
            value: 0.5,
        })
        .unwrap();
        // readable before finish
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{RESULT_HEADER}\ns,smcae,real,3,1,f1,0.5\n"));
        let (_, rows) = sink.finish().unwrap();
        assert_eq!(rows.len(), 1);
    }
}

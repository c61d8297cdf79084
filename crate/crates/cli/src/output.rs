//! Output directory handling, number formatting and run manifests.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Round-trip decimal with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seed_base: Option<u64>,
    pub outputs: Vec<OutputEntry>,
}

pub struct OutputDir {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))
            .map_err(CliError::Io)?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Io)?;
        self.entries.push(OutputEntry {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    pub fn finish<C: Serialize>(
        self,
        command: &str,
        config: &C,
        seed_base: Option<u64>,
    ) -> Result<Vec<OutputEntry>, CliError> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: serde_json::to_value(config)
                .context("serializing config")
                .map_err(CliError::Io)?,
            seed_base,
            outputs: self.entries.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .context("serializing manifest")
            .map_err(CliError::Io)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Io)?;
        Ok(self.entries)
    }
}

/// A CSV document in memory; rows are written with full-precision numbers.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(anyhow::Error::new(e).context("formatting CSV"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(anyhow::anyhow!("formatting CSV: {e}")))
}

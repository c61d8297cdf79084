//! Experiment configuration files (TOML).
//!
//! ```toml
//! theta0 = 7.0
//! lambda = 0.3
//! z0 = 1
//! replications = 100
//! seed = 20170301
//! alphas = [0.05, 0.10]
//! l_values = [0, 7, 20]
//! disparities = ["ld", "hd", "ned"]
//! ```

use std::path::Path;

use anyhow::Context;
use cbp_mde::mc::ExperimentConfig;
use cbp_mde::Disparity;
use serde::Deserialize;

use crate::CliError;

pub const ALLOWED_KEYS: [&str; 8] = [
    "theta0",
    "lambda",
    "z0",
    "replications",
    "seed",
    "alphas",
    "l_values",
    "disparities",
];

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
pub struct ConfigFile {
    pub theta0: Option<f64>,
    pub lambda: Option<f64>,
    pub z0: Option<u64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub alphas: Option<Vec<f64>>,
    pub l_values: Option<Vec<usize>>,
    pub disparities: Option<Vec<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !ALLOWED_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!(
                "unknown config keys: {} (allowed: {})",
                unknown.join(", "),
                ALLOWED_KEYS.join(", ")
            )));
        }
        table
            .try_into()
            .map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::Io)?;
        Self::parse(&text)
    }

    /// Overlays the keys present in the file onto `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(v) = self.theta0 {
            cfg.theta0 = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.z0 {
            cfg.z0 = v;
        }
        if let Some(v) = self.replications {
            cfg.replications = v;
        }
        if let Some(v) = self.seed {
            cfg.seed_base = v;
        }
        if let Some(v) = &self.alphas {
            cfg.alphas = v.clone();
        }
        if let Some(v) = &self.l_values {
            cfg.l_values = v.clone();
        }
        if let Some(v) = &self.disparities {
            cfg.disparities = parse_disparities(v)?;
        }
        Ok(())
    }
}

pub fn parse_disparities<S: AsRef<str>>(names: &[S]) -> Result<Vec<Disparity>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let name = name.as_ref();
        if name.eq_ignore_ascii_case("all") {
            out.extend(Disparity::ALL);
            continue;
        }
        let d: Disparity = name.parse().map_err(|_| {
            CliError::Usage(format!("unknown disparity '{name}' (ld, hd, ned, all)"))
        })?;
        out.push(d);
    }
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("no disparity selected".into()));
    }
    Ok(out)
}

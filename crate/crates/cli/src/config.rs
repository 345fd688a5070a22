//! Run configuration: a JSON file merged under command-line flags, plus the
//! provenance record written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qstretch::fitting::FitOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a `--config` file may set. Flags take precedence field by field.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dwi: Option<PathBuf>,
    pub bvals: Option<PathBuf>,
    pub bvecs: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub tau: Option<f64>,
    /// Shells the stretched fit uses [s/mm²].
    pub shells: Option<Vec<f64>>,
    /// Evaluation shell for measures [s/mm²].
    pub shell: Option<f64>,
    pub estimator: Option<String>,
    pub e_source: Option<String>,
    pub resample_sh: Option<bool>,
    pub sh_order: Option<usize>,
    pub sh_lambda: Option<f64>,
    pub b_tolerance: Option<f64>,
    pub angular_tolerance: Option<f64>,
    pub fit_options: Option<FitOptions>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| crate::usage(format!("config {}: {e}", path.display())))
    }
}

/// `flag` if given, else the file value.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn record_input(role: &str, path: &Path) -> Result<InputRecord> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputRecord { role: role.into(), path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// Sidecar common to every command.
///
/// `config_hash` covers the resolved numerical settings only; paths and the
/// thread count are left out, so identical runs hash identically wherever they
/// write.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize, inputs: Vec<InputRecord>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        // serde_json maps are ordered, so this is canonical
        let config_hash = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Self { tool: "qstretch", version: qstretch::VERSION, command: command.into(), config_hash, config, inputs })
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

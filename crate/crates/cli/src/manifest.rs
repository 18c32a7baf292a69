use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Bumped whenever a CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output files of one run, in emission order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn csv(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.files.push((name.to_string(), serde_json::to_vec_pretty(value)?));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: String,
    pub kind: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputRecord>,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub created_unix: u64,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, seeds: Vec<u64>, art: &Artifacts) -> Self {
        // the output directory does not change the results
        let mut hashed = cfg.clone();
        hashed.out = Default::default();
        let canonical = serde_json::to_vec(&hashed).expect("config serializes");
        Self {
            schema_version: SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: cfg.kind.name().to_string(),
            config_hash: sha256_hex(&canonical),
            config: cfg.clone(),
            seeds,
            outputs: art
                .files
                .iter()
                .map(|(name, bytes)| OutputRecord {
                    file: name.clone(),
                    sha256: sha256_hex(bytes),
                    bytes: bytes.len(),
                })
                .collect(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Files whose checksum differs from `other`, or that only one side has.
    pub fn mismatches(&self, other: &Manifest) -> Vec<String> {
        let mut out = Vec::new();
        for rec in &self.outputs {
            match other.outputs.iter().find(|o| o.file == rec.file) {
                Some(o) if o.sha256 == rec.sha256 => {}
                _ => out.push(rec.file.clone()),
            }
        }
        for rec in &other.outputs {
            if !self.outputs.iter().any(|o| o.file == rec.file) {
                out.push(rec.file.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

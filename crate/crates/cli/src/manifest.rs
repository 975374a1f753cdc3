use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::io::write_file;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub version: String,
    pub timings_ms: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub summary: Value,
}

impl RunManifest {
    /// `config` should hold every setting that affects the outputs, and
    /// nothing that doesn't (such as the output directory).
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        let digest = hex::encode(Sha256::digest(config.to_string().as_bytes()));
        RunManifest {
            command: command.to_string(),
            config,
            config_digest: digest,
            seed,
            version: format!("plnet {}", env!("CARGO_PKG_VERSION")),
            timings_ms: BTreeMap::new(),
            warnings: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pretty JSON with a trailing newline. Maps serialize with sorted keys.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

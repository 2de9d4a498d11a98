use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub nonconverged: bool,
    pub wall_clock_seconds: f64,
}

pub fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>, inputs: Vec<InputDigest>) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            nonconverged: false,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn write(mut self, out: &Path, started: Instant) -> Result<(), CliError> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        crate::write_file(&out.join("manifest.json"), &(text + "\n"))
    }
}

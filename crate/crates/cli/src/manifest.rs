use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one experiment run. Everything but `wall_time_seconds` is a
/// function of the command line.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub wall_time_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn artifact(path: &str, bytes: &[u8]) -> Artifact {
    Artifact {
        path: path.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    }
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        seed: u64,
        artifacts: &[(String, Vec<u8>)],
        wall_time_seconds: f64,
    ) -> serde_json::Result<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            artifacts: artifacts.iter().map(|(p, b)| artifact(p, b)).collect(),
            wall_time_seconds,
        })
    }
}

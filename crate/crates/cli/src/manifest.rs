//! Run manifest: enough to reproduce a run byte-for-byte. No timestamps —
//! re-running the same config against the simulated backend must produce
//! identical bytes everywhere, the manifest included.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use seqconf::generator::CostSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical config JSON. Output locations are not part
    /// of the config, so runs into different directories hash identically.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub ledger: CostSnapshot,
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = config.canonical_json();
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seed: u64, ledger: CostSnapshot) -> Self {
        Self {
            command: command.to_owned(),
            config_sha256: config_hash(config),
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            ledger,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

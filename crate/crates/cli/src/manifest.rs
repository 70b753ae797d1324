use std::path::Path;
use std::time::SystemTime;

use decoy_pns::Scenario;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// Command line as given, program name excluded.
    pub args: Vec<String>,
    /// `sha256:` of the canonical scenario JSON.
    pub scenario_digest: String,
    pub scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn scenario_digest(scenario: &Scenario) -> String {
    let digest = Sha256::digest(scenario.to_canonical_json().as_bytes());
    format!("sha256:{}", hex::encode(digest))
}

pub fn timestamp(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t).to_string()
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        args: Vec<String>,
        scenario: &Scenario,
        seed: Option<u64>,
        started: SystemTime,
    ) -> Self {
        Self {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            args,
            scenario_digest: scenario_digest(scenario),
            scenario: *scenario,
            seed,
            outputs: Vec::new(),
            started_at: timestamp(started),
            finished_at: String::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> std::io::Result<()> {
        self.finished_at = timestamp(SystemTime::now());
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

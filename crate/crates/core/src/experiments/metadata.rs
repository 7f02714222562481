//! Provenance block written at the top of every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_hash: String,
    pub conventions: serde_json::Value,
}

impl Metadata {
    pub fn new(config: &serde_json::Value, conventions: serde_json::Value) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").to_string(), config_hash: config_hash(config), conventions }
    }

    /// `# key: value` lines for CSV headers.
    pub fn comment_lines(&self) -> String {
        format!(
            "# colorpa {}\n# config_hash: {}\n# conventions: {}\n",
            self.version, self.config_hash, self.conventions
        )
    }

    /// Reads the block back from `#` lines; missing keys give `None`.
    pub fn parse_comment_lines(text: &str) -> Option<Self> {
        let mut version = None;
        let mut hash = None;
        let mut conventions = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some(v) = body.strip_prefix("colorpa ") {
                version = Some(v.to_string());
            } else if let Some(h) = body.strip_prefix("config_hash: ") {
                hash = Some(h.to_string());
            } else if let Some(c) = body.strip_prefix("conventions: ") {
                conventions = serde_json::from_str(c).ok();
            }
        }
        Some(Self { version: version?, config_hash: hash?, conventions: conventions? })
    }
}

/// serde_json keeps object keys sorted, so the string form is canonical.
pub fn config_hash(config: &serde_json::Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Conventions shared by every decoding run.
pub fn engine_conventions() -> serde_json::Value {
    serde_json::json!({
        "schedule": "linear in beta from 0",
        "step_order": "resample then sweep",
        "sweep_order": "ascending spin index",
        "free_energy": "sum ln(Q/R) + n ln 2",
        "tie_break": "lowest class index",
    })
}

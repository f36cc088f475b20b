use std::io::Read;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::EvalConfig;

pub const TOOL_NAME: &str = "ttifair";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance embedded in every output document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    /// Absent for commands that take no config (`agree`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub created_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn new(cfg: &EvalConfig, inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_fingerprint: Some(cfg.fingerprint()),
            master_seed: Some(cfg.master_seed),
            inputs,
            created_at: run_timestamp(),
        }
    }

    pub fn without_config(inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_fingerprint: None,
            master_seed: None,
            inputs,
            created_at: run_timestamp(),
        }
    }
}

/// `SOURCE_DATE_EPOCH` when set (reproducible runs), otherwise now.
pub fn run_timestamp() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(Utc::now)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(role: &str, path: &Path) -> std::io::Result<InputDigest> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(InputDigest {
        role: role.into(),
        path: path.display().to_string(),
        sha256: hex::encode(h.finalize()),
    })
}

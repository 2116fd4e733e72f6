//! Provenance block attached to every calibration bundle.
//!
//! Only content hashes and input modification times are recorded, so
//! re-running on unchanged inputs reproduces the bundle byte for byte.

use std::path::Path;
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub file: String,
    pub sha256: String,
    /// Modification time in seconds since the Unix epoch.
    pub modified: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<InputRecord>,
}

impl Provenance {
    pub fn new<'a>(inputs: impl IntoIterator<Item = (&'a str, &'a Path)>) -> CliResult<Self> {
        let inputs = inputs
            .into_iter()
            .map(|(role, path)| {
                let bytes = std::fs::read(path).map_err(|source| CliError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                let modified = std::fs::metadata(path)
                    .and_then(|m| m.modified())
                    .ok()
                    .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                    .map(|d| d.as_secs());
                Ok(InputRecord {
                    role: role.to_string(),
                    file: path
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    modified,
                })
            })
            .collect::<CliResult<_>>()?;
        Ok(Self {
            tool: "creditsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            inputs,
        })
    }
}

/// A calibrated model together with where it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bundle<T> {
    pub provenance: Provenance,
    pub model: T,
}

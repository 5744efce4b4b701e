use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use pedrisk_core::predict::SCHEMA_VERSION;

use crate::error::CliError;

pub const RUN_MANIFEST_FILE: &str = "run-manifest.json";

/// Provenance record written beside every artifact a command produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn start(command: &str, argv: &[String], config_hash: String, seed: Option<u64>) -> Self {
        let now = Utc::now();
        let versions = BTreeMap::from([
            ("pedrisk".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("prediction_schema".to_string(), SCHEMA_VERSION.to_string()),
        ]);
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now,
            finished_at: now,
            versions,
        }
    }

    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_at = Utc::now();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(|e| CliError::Internal(format!("write {}: {e}", path.display())))
    }
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use pedrisk_core::predict::DEFAULT_TOP_K;

/// The `[serve]` section of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub weights: Option<PathBuf>,
    /// Fitted registry text written by `train`.
    pub registry: Option<PathBuf>,
    /// Extra LMS rows (e.g. weight-for-length) merged over the built-in CDC table.
    pub lms_table: Option<PathBuf>,
    /// Upstream FHIR base URL used when a request names no `server`.
    pub fhir_server: Option<String>,
    pub fhir_token: Option<String>,
    pub fhir_timeout_secs: u64,
    /// Static bearer token required on every route except health.
    pub token: Option<String>,
    pub top_k: usize,
    /// Directory of a built UI bundle to serve at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            weights: None,
            registry: None,
            lms_table: None,
            fhir_server: None,
            fhir_token: None,
            fhir_timeout_secs: 30,
            token: None,
            top_k: DEFAULT_TOP_K,
            ui_dir: None,
        }
    }
}

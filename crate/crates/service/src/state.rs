use std::sync::{Arc, RwLock};
use std::time::Duration;

use thiserror::Error;

use pedrisk_core::growth::{GrowthError, LmsTable};
use pedrisk_core::model::{io, ModelError};
use pedrisk_core::predict::{PredictError, Predictor};
use pedrisk_core::registry::{FeatureRegistry, RegistryError};

use crate::client::FhirClient;
use crate::config::ServiceConfig;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("no weights path configured")]
    NoWeights,
    #[error("no registry path configured")]
    NoRegistry,
    #[error("weights: {0}")]
    Weights(#[from] ModelError),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("growth table: {0}")]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Predictor(#[from] PredictError),
}

/// Read weights, fitted registry and growth tables named in `config`.
pub fn load_predictor(config: &ServiceConfig) -> Result<Predictor, LoadError> {
    let registry = FeatureRegistry::load(config.registry.as_ref().ok_or(LoadError::NoRegistry)?)?;
    let fingerprint = registry.fingerprint();
    let weights = io::load(config.weights.as_ref().ok_or(LoadError::NoWeights)?, Some(&fingerprint))?;
    let mut table = LmsTable::cdc_bmi();
    if let Some(path) = &config.lms_table {
        table.merge(LmsTable::load(path)?);
    }
    Ok(Predictor::new(weights, registry, table, config.top_k)?)
}

/// Shared server state. The loaded model sits behind an `Arc` that
/// handlers clone once per request, so a reload swaps the whole model
/// between requests and never mid-request.
pub struct AppState {
    config: ServiceConfig,
    model: RwLock<Option<Arc<Predictor>>>,
    client: FhirClient,
}

impl AppState {
    pub fn new(config: ServiceConfig, predictor: Option<Predictor>) -> Self {
        let client = FhirClient::new(Duration::from_secs(config.fhir_timeout_secs.max(1)));
        Self {
            config,
            model: RwLock::new(predictor.map(Arc::new)),
            client,
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn client(&self) -> &FhirClient {
        &self.client
    }

    pub fn predictor(&self) -> Option<Arc<Predictor>> {
        self.model.read().expect("model lock poisoned").clone()
    }

    pub fn swap(&self, predictor: Predictor) {
        *self.model.write().expect("model lock poisoned") = Some(Arc::new(predictor));
    }

    /// Reload from the configured paths; the old model stays live on failure.
    pub fn reload(&self) -> Result<String, LoadError> {
        let p = load_predictor(&self.config)?;
        let version = p.model_version().to_string();
        self.swap(p);
        Ok(version)
    }
}

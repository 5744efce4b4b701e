//! Recurrent risk model: summed feature embeddings per bin, a stacked LSTM,
//! additive attention pooling, demographic embeddings and three per-horizon
//! heads that each emit an obesity probability and a BMI estimate.
//!
//! Everything is generic over the float type so gradients can be checked in
//! `f64`; training, serving and the weight container use `f32`.

mod backward;
mod config;
mod forward;
pub mod io;
mod ops;
mod optim;
mod params;
mod salience;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backward::backward;
pub use config::ModelConfig;
pub use forward::{
    check_input, draw_dropout_masks, forward, loss, loss_terms, ForwardCache, HorizonOutput, ModelOutput, LOSS_EPS,
};
pub use optim::{batch_gradients, train_step, Adam, StepStats, GRAD_CLIP_NORM};
pub use params::{Head, LstmLayer, Params, Tensor};
pub use salience::{input_salience, rank_risk_factors, RiskFactor};

use crate::sequence::{DemographicVector, ScheduleConfig, TimeBinnedSequence};

pub trait Scalar: Float + FromPrimitive + Default + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + Default + Debug + Send + Sync + 'static> Scalar for T {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input id {id} is outside the vocabulary of {vocab}")]
    UnknownId { id: u32, vocab: usize },
    #[error("every horizon is masked")]
    AllMasked,
    #[error("non-finite gradient; step aborted")]
    NonFiniteGradient,
    #[error("container version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("weights were trained with registry {found}, but {expected} is loaded")]
    FingerprintMismatch { expected: String, found: String },
    #[error("corrupt weight file: {0}")]
    Corrupt(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Borrowed model input: bins of active input ids plus demographic indices.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub bins: &'a [Vec<u32>],
    pub demographics: [usize; DemographicVector::FIELDS],
}

impl<'a> ModelInput<'a> {
    pub fn new(sequence: &'a TimeBinnedSequence, demo: &DemographicVector) -> Self {
        Self {
            bins: &sequence.bins,
            demographics: demo.as_array(),
        }
    }
}

/// Ground truth at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonLabel {
    pub obese: bool,
    pub bmi: f64,
}

/// Owned training example; `labels[h]` is `None` where the horizon is masked.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub bins: Vec<Vec<u32>>,
    pub demographics: [usize; DemographicVector::FIELDS],
    pub labels: Vec<Option<HorizonLabel>>,
}

impl Example {
    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            bins: &self.bins,
            demographics: self.demographics,
        }
    }
}

/// Split-conformal BMI interval half-widths per horizon; `None` where the
/// calibration set was too small for the requested coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha: f64,
    pub half_widths: Vec<Option<f64>>,
}

/// Trained model artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub schedule: ScheduleConfig,
    pub registry_fingerprint: String,
    pub calibration: Option<Calibration>,
    pub params: Params<f32>,
}

impl ModelWeights {
    pub fn init(config: ModelConfig, schedule: ScheduleConfig, registry_fingerprint: String) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            params: Params::init(&config),
            config,
            schedule,
            registry_fingerprint,
            calibration: None,
        })
    }

    /// Inference-mode forward pass (dropout off).
    pub fn infer(&self, input: &ModelInput<'_>) -> Result<ModelOutput, ModelError> {
        Ok(forward(&self.config, &self.params, input, None)?.output())
    }
}

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::sequence::DemographicCardinalities;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Expanded input vocabulary size.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lstm_layers: usize,
    pub attention_dim: usize,
    pub demographics: DemographicCardinalities,
    /// Per-field demographic embedding width; fields are concatenated.
    pub demo_embed_dim: usize,
    pub head_hidden: (usize, usize),
    pub leaky_relu_slope: f64,
    pub dropout: f64,
    pub horizons: usize,
    /// Weight of the squared BMI error in the joint loss.
    pub loss_lambda: f64,
    /// BMI regression output is `bmi_center + bmi_scale * raw`.
    pub bmi_center: f64,
    pub bmi_scale: f64,
    pub forget_bias: f64,
    /// Standard deviation of the embedding initialization.
    pub embed_init_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embed_dim: 256,
            hidden_dim: 512,
            lstm_layers: 2,
            attention_dim: 128,
            demographics: DemographicCardinalities::default(),
            demo_embed_dim: 8,
            head_hidden: (512, 256),
            leaky_relu_slope: 0.1,
            dropout: 0.2,
            horizons: 3,
            loss_lambda: 1.0,
            bmi_center: 17.0,
            bmi_scale: 1.0,
            forget_bias: 1.0,
            embed_init_std: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self { vocab_size, ..Self::default() }
    }

    /// Small dimensions that train in minutes on one CPU core. The BMI term
    /// is down-weighted because its squared error in kg/m2 otherwise swamps
    /// the classification loss at this size.
    pub fn compact(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            hidden_dim: 32,
            attention_dim: 16,
            head_hidden: (64, 32),
            loss_lambda: 0.05,
            ..Self::default()
        }
    }

    /// Width of the vector fed to the heads.
    pub fn head_input_dim(&self) -> usize {
        self.hidden_dim + self.demo_embed_dim * self.demographics.as_array().len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("lstm_layers", self.lstm_layers),
            ("attention_dim", self.attention_dim),
            ("demo_embed_dim", self.demo_embed_dim),
            ("head_hidden.0", self.head_hidden.0),
            ("head_hidden.1", self.head_hidden.1),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.demographics.as_array().contains(&0) {
            return Err(ModelError::InvalidConfig("demographic cardinalities must be positive".into()));
        }
        if self.horizons != 3 {
            return Err(ModelError::InvalidConfig("horizons must be 3".into()));
        }
        if !(self.leaky_relu_slope > 0.0 && self.leaky_relu_slope < 1.0) {
            return Err(ModelError::InvalidConfig("leaky_relu_slope must be in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        let finite = [self.loss_lambda, self.bmi_center, self.bmi_scale, self.forget_bias, self.embed_init_std];
        if finite.iter().any(|x| !x.is_finite()) || self.loss_lambda < 0.0 || self.bmi_scale <= 0.0 {
            return Err(ModelError::InvalidConfig("loss and output constants must be finite".into()));
        }
        Ok(())
    }
}

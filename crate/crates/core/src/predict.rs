//! Single-patient prediction: bundle or record in, `PredictionResult` out.
//! The CLI and the HTTP service both render through [`Predictor`], so the
//! same input yields the same bytes on either path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{bmi_series, HORIZONS};
use crate::fhir::{parse_bundle, to_patient_record, FhirError, FhirResourceSet};
use crate::growth::{assess, LmsTable};
use crate::model::{input_salience, io, rank_risk_factors, ModelError, ModelInput, ModelWeights, RiskFactor};
use crate::record::{CodeSystem, Domain, PatientRecord, Sex, DAYS_PER_MONTH, DAYS_PER_YEAR};
use crate::registry::{convert_unit, reserved, FeatureRegistry};
use crate::sequence::{encode_demographics, make_schedule, SequenceError, Sequencer};

pub const SCHEMA_VERSION: &str = "v1";
pub const DISCLAIMER_ID: &str = "research-use-only-v1";
/// Observation windows (years since birth) the service predicts from.
pub const SUPPORTED_WINDOWS: std::ops::RangeInclusive<u32> = 2..=7;
pub const DEFAULT_TOP_K: usize = 5;
pub const MAX_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum IneligibleReason {
    AgeOutsideWindows { age_years: f64 },
    NoBmiHistory,
}

impl std::fmt::Display for IneligibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IneligibleReason::AgeOutsideWindows { age_years } => write!(
                f,
                "age {age_years:.2} years is outside the supported windows ({}-{} years)",
                SUPPORTED_WINDOWS.start(),
                SUPPORTED_WINDOWS.end()
            ),
            IneligibleReason::NoBmiHistory => f.write_str("no BMI history in the record"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Fhir(#[from] FhirError),
    #[error("ineligible: {0}")]
    Ineligible(IneligibleReason),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Identifying header shown to clinicians: name and date of birth only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientHeader {
    pub name: Option<String>,
    pub birth_date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPrediction {
    pub horizon: usize,
    pub age_years: u32,
    pub risk: f64,
    pub bmi_pred: f64,
    /// Conformal half-width; absent when the model carries no calibration.
    pub half_width: Option<f64>,
    pub percentile_pred: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub age_years: f64,
    pub bmi: f64,
    /// BMI-for-age percentile; absent before 24 months.
    pub percentile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub age_years: f64,
    pub bmi: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub percentile: Option<f64>,
}

/// BMI history plus predictions; `weight_kg` and `height_cm` run parallel
/// to `history` for the weight view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub history: Vec<HistoryPoint>,
    pub weight_kg: Vec<Option<f64>>,
    pub height_cm: Vec<Option<f64>>,
    pub predicted: Vec<PredictedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub schema_version: String,
    pub patient_id: String,
    pub patient: PatientHeader,
    pub as_of_age_years: f64,
    pub window_years: u32,
    pub horizons: Vec<HorizonPrediction>,
    pub trajectory: Trajectory,
    pub risk_factors: Vec<RiskFactor>,
    pub model_version: String,
    pub registry_fingerprint: String,
    pub disclaimer_id: String,
}

impl PredictionResult {
    /// Canonical JSON rendering shared by every interface.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_version: String,
    pub registry_fingerprint: String,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lstm_layers: usize,
    pub parameters: usize,
    pub supported_windows: Vec<u32>,
    pub horizons: Vec<usize>,
    pub conformal_alpha: Option<f64>,
}

/// Loaded model plus everything needed to turn a chart into a result.
#[derive(Debug, Clone)]
pub struct Predictor {
    weights: ModelWeights,
    sequencer: Sequencer,
    table: LmsTable,
    model_version: String,
    top_k: usize,
}

impl Predictor {
    /// `registry` must be the fitted registry the weights were trained with.
    pub fn new(weights: ModelWeights, registry: FeatureRegistry, table: LmsTable, top_k: usize) -> Result<Self, PredictError> {
        let found = registry.fingerprint();
        if found != weights.registry_fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: weights.registry_fingerprint.clone(),
                found,
            }
            .into());
        }
        let sequencer = Sequencer::new(registry, make_schedule(&weights.schedule)?)?;
        if sequencer.vocab().size() != weights.config.vocab_size {
            return Err(ModelError::ShapeMismatch(format!(
                "registry vocabulary has {} inputs, model expects {}",
                sequencer.vocab().size(),
                weights.config.vocab_size
            ))
            .into());
        }
        Ok(Self {
            model_version: io::model_version(&weights),
            weights,
            sequencer,
            table,
            top_k: top_k.min(MAX_TOP_K),
        })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    pub fn growth_table(&self) -> &LmsTable {
        &self.table
    }

    pub fn summary(&self) -> ModelSummary {
        let c = &self.weights.config;
        ModelSummary {
            model_version: self.model_version.clone(),
            registry_fingerprint: self.weights.registry_fingerprint.clone(),
            vocab_size: c.vocab_size,
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            lstm_layers: c.lstm_layers,
            parameters: self.weights.params.len(),
            supported_windows: SUPPORTED_WINDOWS.collect(),
            horizons: (1..=HORIZONS).collect(),
            conformal_alpha: self.weights.calibration.as_ref().map(|c| c.alpha),
        }
    }

    pub fn predict_bundle(&self, raw: &[u8]) -> Result<PredictionResult, PredictError> {
        self.predict_resources(&parse_bundle(raw)?)
    }

    pub fn predict_resources(&self, set: &FhirResourceSet) -> Result<PredictionResult, PredictError> {
        self.predict_record(&to_patient_record(set)?)
    }

    /// The prediction point is the age at the latest charted event, and the
    /// observation window is that age rounded down to whole years.
    pub fn predict_record(&self, record: &PatientRecord) -> Result<PredictionResult, PredictError> {
        let series = bmi_series(record);
        let as_of_days = record.last_event_age_days().unwrap_or(0);
        let as_of_years = as_of_days as f64 / DAYS_PER_YEAR;
        let window = as_of_years.floor() as u32;
        if !SUPPORTED_WINDOWS.contains(&window) || as_of_years < 0.0 {
            return Err(PredictError::Ineligible(IneligibleReason::AgeOutsideWindows { age_years: as_of_years }));
        }
        if series.is_empty() {
            return Err(PredictError::Ineligible(IneligibleReason::NoBmiHistory));
        }

        let sequence = self.sequencer.build(record, window)?;
        let demo = encode_demographics(record, window, &self.weights.config.demographics);
        let output = self.weights.infer(&ModelInput::new(&sequence, &demo))?;

        let percentile = |age_months: f64, bmi: f64| -> Option<f64> {
            if record.sex == Sex::Unknown {
                return None;
            }
            assess(&self.table, record.sex, age_months, bmi).ok().map(|a| a.percentile)
        };
        let half_widths = self.weights.calibration.as_ref().map(|c| c.half_widths.clone());
        let mut horizons = Vec::with_capacity(HORIZONS);
        let mut predicted = Vec::with_capacity(HORIZONS);
        for (h, out) in output.horizons.iter().enumerate() {
            let age_years = window + h as u32 + 1;
            let half_width = half_widths.as_ref().and_then(|w| w.get(h).copied().flatten());
            let pct = percentile(f64::from(age_years) * 12.0, out.bmi_pred);
            horizons.push(HorizonPrediction {
                horizon: h + 1,
                age_years,
                risk: out.prob_obese.clamp(0.0, 1.0),
                bmi_pred: out.bmi_pred,
                half_width,
                percentile_pred: pct,
            });
            predicted.push(PredictedPoint {
                age_years: f64::from(age_years),
                bmi: out.bmi_pred,
                lower: half_width.map(|w| out.bmi_pred - w),
                upper: half_width.map(|w| out.bmi_pred + w),
                percentile: pct,
            });
        }

        let (weights, heights) = growth_readings(record);
        let observed: Vec<(i64, f64)> = series.into_iter().filter(|(day, _)| *day <= as_of_days).collect();
        let history = observed
            .iter()
            .map(|&(day, bmi)| HistoryPoint {
                age_years: day as f64 / DAYS_PER_YEAR,
                bmi,
                percentile: percentile(day as f64 / DAYS_PER_MONTH, bmi),
            })
            .collect();
        let weight_kg = observed.iter().map(|(day, _)| weights.get(day).copied()).collect();
        let height_cm = observed.iter().map(|(day, _)| heights.get(day).copied()).collect();

        let salience = input_salience(&self.weights.params, &sequence.bins, &output.attention);
        let risk_factors = rank_risk_factors(
            &salience,
            self.sequencer.vocab(),
            self.sequencer.registry(),
            self.top_k,
        );

        Ok(PredictionResult {
            schema_version: SCHEMA_VERSION.into(),
            patient_id: record.patient_id.clone(),
            patient: PatientHeader {
                name: record.name.clone(),
                birth_date: record.birth_date.format("%Y-%m-%d").to_string(),
            },
            as_of_age_years: as_of_years,
            window_years: window,
            horizons,
            trajectory: Trajectory {
                history,
                weight_kg,
                height_cm,
                predicted,
            },
            risk_factors,
            model_version: self.model_version.clone(),
            registry_fingerprint: self.weights.registry_fingerprint.clone(),
            disclaimer_id: DISCLAIMER_ID.into(),
        })
    }
}

type Readings = std::collections::BTreeMap<i64, f64>;

/// Weight (kg) and height (cm) readings by age in days.
fn growth_readings(record: &PatientRecord) -> (Readings, Readings) {
    let mut weights = Readings::new();
    let mut heights = Readings::new();
    for ev in &record.events {
        if ev.domain != Domain::Measurement || ev.code_system != CodeSystem::Loinc {
            continue;
        }
        let Some(v) = ev.value else { continue };
        match ev.code.as_str() {
            reserved::BODY_WEIGHT => {
                if let Some(kg) = convert_unit(v, ev.unit.as_deref().unwrap_or("kg"), "kg") {
                    weights.insert(ev.age_days, kg);
                }
            }
            reserved::BODY_HEIGHT => {
                if let Some(cm) = convert_unit(v, ev.unit.as_deref().unwrap_or("cm"), "cm") {
                    heights.insert(ev.age_days, cm);
                }
            }
            _ => {}
        }
    }
    (weights, heights)
}

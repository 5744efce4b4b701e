use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::conformal_interval;
use super::report::{build_report, predict_all, EvalOptions, EvalReport};
use super::split::{split_patients, undersample, Role, Split, SplitError};
use super::{build_examples, LabeledExample, HORIZONS};
use crate::growth::LmsTable;
use crate::model::{forward, train_step, Adam, Calibration, Example, ModelConfig, ModelError, ModelWeights, Params};
use crate::record::PatientRecord;
use crate::registry::{FeatureRegistry, RegistryError};
use crate::sequence::{make_schedule, ScheduleConfig, SequenceError, Sequencer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no labelled training examples")]
    NoExamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    /// Observation windows (years) to build examples for.
    pub windows: Vec<u32>,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Majority/minority cap for the training set; `None` keeps every example.
    pub undersample_ratio: Option<f64>,
    pub conformal_alpha: f64,
    pub eval: EvalOptions,
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::compact(0),
            schedule: ScheduleConfig::default(),
            windows: (2..=7).collect(),
            max_epochs: 50,
            patience: 5,
            min_delta: 1e-4,
            batch_size: 32,
            learning_rate: 1e-3,
            undersample_ratio: Some(1.0),
            conformal_alpha: 0.1,
            eval: EvalOptions::default(),
            threads: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn resolved_threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    Prepared {
        train_examples: usize,
        val_examples: usize,
        test_examples: usize,
    },
    Epoch(EpochRecord),
    EarlyStop { epoch: usize, best_epoch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// Registry with cohort quantiles fitted on the training split.
    pub registry: FeatureRegistry,
    pub report: EvalReport,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub split: Split,
    pub test_examples: Vec<LabeledExample>,
}

fn mean_loss(cfg: &ModelConfig, params: &Params<f32>, examples: &[Example]) -> Result<Option<f64>, ModelError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for ex in examples {
        total += f64::from(forward(cfg, params, &ex.input(), None)?.loss(&ex.labels, cfg.loss_lambda)?);
    }
    Ok(Some(total / examples.len() as f64))
}

/// Split, fit quantiles, build examples, undersample, train with early
/// stopping on validation loss, calibrate conformal intervals on the
/// validation split and evaluate on the test split.
pub fn train(
    config: &TrainConfig,
    cohort: &[PatientRecord],
    registry: &FeatureRegistry,
    growth: &LmsTable,
    mut on_event: impl FnMut(&TrainEvent),
) -> Result<TrainOutcome, TrainError> {
    let threads = config.resolved_threads();
    let ids: Vec<String> = cohort.iter().map(|r| r.patient_id.clone()).collect();
    let split = split_patients(&ids, config.seed)?;
    let roles: HashMap<&str, Role> = [(&split.train, Role::Train), (&split.val, Role::Val), (&split.test, Role::Test)]
        .into_iter()
        .flat_map(|(ids, role)| ids.iter().map(move |id| (id.as_str(), role)))
        .collect();
    let role_of = |r: &PatientRecord| roles.get(r.patient_id.as_str()).copied();

    let train_records = cohort.iter().filter(|r| role_of(r) == Some(Role::Train));
    let fitted = registry.fit_cohort_quantiles(&Sequencer::measurement_values(registry, train_records))?;
    let sequencer = Sequencer::new(fitted.clone(), make_schedule(&config.schedule)?)?;

    let card = config.model.demographics;
    let mut parts: BTreeMap<u8, Vec<LabeledExample>> = BTreeMap::new();
    for r in cohort {
        let Some(role) = role_of(r) else { continue };
        let key = match role {
            Role::Train => 0,
            Role::Val => 1,
            Role::Test => 2,
        };
        parts
            .entry(key)
            .or_default()
            .extend(build_examples(r, &sequencer, growth, &config.windows, &card));
    }
    let mut train_ex = parts.remove(&0).unwrap_or_default();
    let val_ex = parts.remove(&1).unwrap_or_default();
    let test_ex = parts.remove(&2).unwrap_or_default();
    if let Some(ratio) = config.undersample_ratio {
        train_ex = undersample(train_ex, ratio, config.seed)?;
    }
    if train_ex.is_empty() {
        return Err(TrainError::NoExamples);
    }
    on_event(&TrainEvent::Prepared {
        train_examples: train_ex.len(),
        val_examples: val_ex.len(),
        test_examples: test_ex.len(),
    });

    let bmi_labels: Vec<f64> = train_ex.iter().flat_map(|e| e.labels.iter().flatten().map(|l| l.bmi)).collect();
    let mean = bmi_labels.iter().sum::<f64>() / bmi_labels.len() as f64;
    let var = bmi_labels.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / bmi_labels.len() as f64;
    let model_cfg = ModelConfig {
        vocab_size: sequencer.vocab().size(),
        bmi_center: mean,
        bmi_scale: var.sqrt().max(1e-3),
        seed: config.seed,
        ..config.model.clone()
    };
    let mut weights = ModelWeights::init(model_cfg.clone(), config.schedule.clone(), fitted.fingerprint())?;

    let train_m: Vec<Example> = train_ex.iter().map(LabeledExample::to_model_example).collect();
    let val_m: Vec<Example> = val_ex.iter().map(LabeledExample::to_model_example).collect();
    let mut adam = Adam::new(&model_cfg);
    let mut best = (f64::INFINITY, weights.params.clone(), 0usize);
    let mut history = Vec::new();
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_m.len()).collect();
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_m[i]).collect();
            let dropout_seed = config.seed ^ ((epoch as u64) << 40) ^ step as u64;
            let stats = train_step(
                &model_cfg,
                &mut weights.params,
                &mut adam,
                &batch,
                config.learning_rate,
                Some(dropout_seed),
                threads,
            )?;
            loss_sum += stats.loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_m.len() as f64;
        let val_loss = mean_loss(&model_cfg, &weights.params, &val_m)?;
        let monitored = val_loss.unwrap_or(train_loss);
        let improved = monitored < best.0 - config.min_delta;
        if improved {
            best = (monitored, weights.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            improved,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_event(&TrainEvent::Epoch(record.clone()));
        history.push(record);
        if stale >= config.patience {
            on_event(&TrainEvent::EarlyStop {
                epoch,
                best_epoch: best.2,
            });
            break;
        }
    }
    weights.params = best.1;
    let best_epoch = best.2;

    let val_pred = predict_all(&weights, &val_ex, threads)?;
    let half_widths: Vec<Option<f64>> = (0..HORIZONS)
        .map(|h| {
            let residuals: Vec<f64> = val_ex
                .iter()
                .zip(&val_pred)
                .filter_map(|(e, p)| e.labels[h].map(|l| p.bmi[h] - l.bmi))
                .collect();
            conformal_interval(&residuals, config.conformal_alpha).ok()
        })
        .collect();
    weights.calibration = Some(Calibration {
        alpha: config.conformal_alpha,
        half_widths: half_widths.clone(),
    });

    let eval_opts = EvalOptions {
        seed: config.seed,
        threads,
        ..config.eval.clone()
    };
    let test_pred = predict_all(&weights, &test_ex, threads)?;
    let report = build_report(&test_ex, &test_pred, &half_widths, Some(config.conformal_alpha), &eval_opts);
    Ok(TrainOutcome {
        weights,
        registry: fitted,
        report,
        history,
        best_epoch,
        split,
        test_examples: test_ex,
    })
}

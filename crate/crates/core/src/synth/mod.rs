//! Deterministic synthetic cohorts with a planted risk signal.
//!
//! Each child's BMI trajectory lives in z-space: a stationary AR(1) process
//! around a propensity-linked mean, plus independent measurement noise, mapped
//! through the BMI-for-age LMS reference. The marginal z at every age is
//! standard normal shifted so that `P(z >= z95) = propensity`, which makes the
//! label prevalence at any age equal to the propensity in expectation.

mod bundle;
mod eligibility;
mod generate;
mod skew;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{read_cohort, to_fhir_bundle, to_fhir_bundles, write_cohort, CohortError, MANIFEST_FILE};
pub use eligibility::{apply_eligibility, check_eligibility, Ineligible, MIN_HISTORY_YEARS};
pub use generate::{generate, manifest, AgeLabel, GroundTruth, SyntheticPatient};
pub use skew::{skew_dates, skew_offset, SKEW_DAYS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("planted feature {0} is not in the registry")]
    UnknownPlantedFeature(u32),
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

/// A feature whose carriers get a raised obesity propensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub feature_id: u32,
    pub odds_multiplier: f64,
    /// Share of children carrying the feature.
    pub carrier_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// Well-child visit ages in months up to 24; annual visits follow.
    pub infant_visit_months: Vec<f64>,
    pub base_obesity_rate: f64,
    pub planted_features: Vec<PlantedFeature>,
    /// Year-to-year autocorrelation of the latent BMI z-score.
    pub trajectory_rho: f64,
    /// Measurement noise as a share of the unit z variance (standard deviation).
    pub bmi_noise_sd: f64,
    pub sites: Vec<String>,
    /// Inclusive birth-year range.
    pub birth_years: (i32, i32),
    pub min_followup_years: f64,
    pub max_followup_years: f64,
    /// Share of charts that stop before the minimum history length.
    pub short_followup_rate: f64,
    pub missed_visit_rate: f64,
    /// Share of charts carrying an exclusion condition.
    pub exclusion_rate: f64,
    /// Share of charts without any growth measurements.
    pub no_growth_rate: f64,
    pub sick_visits_per_year: f64,
    pub skew_days: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 1000,
            seed: 0,
            infant_visit_months: vec![1.0, 2.0, 4.0, 6.0, 9.0, 12.0, 18.0, 24.0],
            base_obesity_rate: 0.08,
            planted_features: vec![
                PlantedFeature {
                    feature_id: 12,
                    odds_multiplier: 4.0,
                    carrier_rate: 0.2,
                },
                PlantedFeature {
                    feature_id: 13,
                    odds_multiplier: 4.0,
                    carrier_rate: 0.2,
                },
                PlantedFeature {
                    feature_id: 6,
                    odds_multiplier: 4.0,
                    carrier_rate: 0.2,
                },
            ],
            trajectory_rho: 0.94,
            bmi_noise_sd: 0.5,
            sites: vec!["site-a".into(), "site-b".into(), "site-c".into(), "site-d".into()],
            birth_years: (2008, 2013),
            min_followup_years: 5.0,
            max_followup_years: 11.0,
            short_followup_rate: 0.03,
            missed_visit_rate: 0.08,
            exclusion_rate: 0.02,
            no_growth_rate: 0.01,
            sick_visits_per_year: 1.2,
            skew_days: SKEW_DAYS,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.base_obesity_rate) {
            return bad(format!("base_obesity_rate {} must lie in [0, 1)", self.base_obesity_rate));
        }
        for (name, v) in [
            ("short_followup_rate", self.short_followup_rate),
            ("missed_visit_rate", self.missed_visit_rate),
            ("exclusion_rate", self.exclusion_rate),
            ("no_growth_rate", self.no_growth_rate),
        ] {
            if !unit(v) {
                return bad(format!("{name} {v} must lie in [0, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.trajectory_rho) {
            return bad(format!("trajectory_rho {} must lie in [0, 1)", self.trajectory_rho));
        }
        if !(0.0..1.0).contains(&self.bmi_noise_sd) {
            return bad(format!("bmi_noise_sd {} must lie in [0, 1)", self.bmi_noise_sd));
        }
        for p in &self.planted_features {
            if !(p.odds_multiplier > 0.0 && p.odds_multiplier.is_finite()) {
                return bad(format!("feature {}: odds multiplier must be positive", p.feature_id));
            }
            if !(p.carrier_rate > 0.0 && p.carrier_rate <= 1.0) {
                return bad(format!("feature {}: carrier rate must lie in (0, 1]", p.feature_id));
            }
        }
        if self.sites.is_empty() {
            return bad("at least one site is required".into());
        }
        if self.birth_years.0 > self.birth_years.1 {
            return bad("birth_years range is empty".into());
        }
        if !(self.min_followup_years >= 2.0 && self.min_followup_years <= self.max_followup_years) {
            return bad("follow-up range must satisfy 2 <= min <= max".into());
        }
        if self.max_followup_years > 19.0 {
            return bad("follow-up beyond 19 years leaves the growth reference".into());
        }
        if self.infant_visit_months.iter().any(|m| !(*m > 0.0 && *m <= 24.0)) {
            return bad("infant visit months must lie in (0, 24]".into());
        }
        if !(self.sick_visits_per_year >= 0.0) || self.skew_days < 0 {
            return bad("sick_visits_per_year and skew_days must be non-negative".into());
        }
        Ok(())
    }
}

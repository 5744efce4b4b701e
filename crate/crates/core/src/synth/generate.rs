use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{skew_dates, SynthConfig, SynthError};
use crate::eval::{bmi_series, label_at};
use crate::growth::{Lms, LmsTable, Metric};
use crate::model::HorizonLabel;
use crate::record::{
    ClinicalEvent, CodeSystem, Domain, Ethnicity, Insurance, PatientRecord, Race, Sex, DAYS_PER_MONTH, DAYS_PER_YEAR,
};
use crate::registry::{reserved, FeatureRegistry};

/// z-score of the 95th percentile.
const Z95: f64 = 1.644_853_626_951_472_2;
const Z_RANGE: (f64, f64) = (-4.0, 3.5);
/// Above this z the LMS curve is continued linearly.
const Z_LINEAR: f64 = 2.0;
const INFANT_BMI_S: f64 = 0.085;

const HEAD_CIRCUMFERENCE: &str = "9843-4";
const SYSTOLIC: &str = "8480-6";
const DIASTOLIC: &str = "8462-4";
const HEART_RATE: &str = "8867-4";
const HEMOGLOBIN: &str = "718-7";
const MMR_VACCINE: &str = "90707";

// Median length/height (cm) by age in months.
const HEIGHT_MALE: [(f64, f64); 27] = [
    (0.0, 49.9), (1.0, 54.7), (2.0, 58.4), (4.0, 63.9), (6.0, 67.6), (9.0, 72.0), (12.0, 75.7),
    (18.0, 82.3), (24.0, 86.9), (36.0, 95.3), (48.0, 102.5), (60.0, 109.2), (72.0, 115.5),
    (84.0, 121.7), (96.0, 127.3), (108.0, 132.6), (120.0, 137.8), (132.0, 143.1), (144.0, 149.1),
    (156.0, 156.0), (168.0, 163.2), (180.0, 169.0), (192.0, 172.9), (204.0, 175.2), (216.0, 176.1),
    (228.0, 176.5), (240.0, 176.8),
];
const HEIGHT_FEMALE: [(f64, f64); 27] = [
    (0.0, 49.1), (1.0, 53.7), (2.0, 57.1), (4.0, 62.1), (6.0, 65.7), (9.0, 70.1), (12.0, 74.0),
    (18.0, 80.7), (24.0, 85.5), (36.0, 94.1), (48.0, 101.6), (60.0, 108.4), (72.0, 114.6),
    (84.0, 120.6), (96.0, 126.4), (108.0, 132.2), (120.0, 138.3), (132.0, 144.8), (144.0, 151.2),
    (156.0, 156.4), (168.0, 159.8), (180.0, 161.7), (192.0, 162.5), (204.0, 162.9), (216.0, 163.1),
    (228.0, 163.2), (240.0, 163.3),
];
// Median infant BMI before the reference table starts at 24 months.
const INFANT_BMI_MALE: [(f64, f64); 8] = [
    (0.0, 13.4), (1.0, 14.9), (2.0, 16.3), (4.0, 17.3), (6.0, 17.3), (9.0, 17.2), (12.0, 16.8), (18.0, 16.4),
];
const INFANT_BMI_FEMALE: [(f64, f64); 8] = [
    (0.0, 13.3), (1.0, 14.6), (2.0, 15.8), (4.0, 16.7), (6.0, 16.9), (9.0, 16.7), (12.0, 16.4), (18.0, 15.9),
];
// Male medians; girls run about 0.8 cm smaller.
const HEAD_CIRCUMFERENCE_MEDIAN: [(f64, f64); 9] = [
    (0.0, 34.5), (1.0, 37.3), (2.0, 39.1), (4.0, 41.6), (6.0, 43.3), (9.0, 44.9), (12.0, 46.1), (18.0, 47.4),
    (24.0, 48.3),
];

const GIVEN: [&str; 12] = [
    "Avery", "Jordan", "Riley", "Casey", "Morgan", "Quinn", "Rowan", "Sage", "Emerson", "Harper", "Kai", "Noel",
];
const FAMILY: [&str; 12] = [
    "Lindqvist", "Okafor", "Marsh", "Delgado", "Whitaker", "Nakamura", "Brennan", "Castillo", "Hale", "Ivers",
    "Moreau", "Petrov",
];

/// Observed label at a given age (years), derived from the emitted chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeLabel {
    pub age_years: u32,
    pub label: HorizonLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Probability that any given BMI reading at or after 24 months is obese.
    pub propensity: f64,
    pub carriers: Vec<u32>,
    pub labels: Vec<AgeLabel>,
}

impl GroundTruth {
    pub fn label_at_age(&self, age_years: u32) -> Option<HorizonLabel> {
        self.labels.iter().find(|l| l.age_years == age_years).map(|l| l.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub record: PatientRecord,
    pub truth: GroundTruth,
}

fn interp(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 <= x);
    if i == 0 {
        return knots[0].1;
    }
    if i == knots.len() {
        return knots[i - 1].1;
    }
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, weighted: &[(T, f64)]) -> T {
    let total: f64 = weighted.iter().map(|w| w.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(v, w) in weighted {
        if u < w {
            return v;
        }
        u -= w;
    }
    weighted[weighted.len() - 1].0
}

fn propensity(base: f64, log_odds: f64) -> f64 {
    if base == 0.0 {
        return 0.0;
    }
    let logit = (base / (1.0 - base)).ln() + log_odds;
    1.0 / (1.0 + (-logit).exp())
}

/// Latent-mean shift that puts `p` of a unit normal above the 95th percentile.
fn latent_mean(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    Z95 + Normal::standard().inverse_cdf(p)
}

/// Value at `z`, continued along the secant from z95 past [`Z_LINEAR`]
/// where the Box-Cox inverse explodes for strongly negative L.
fn value_at(lms: &Lms, z: f64) -> Option<f64> {
    if z <= Z_LINEAR {
        return lms.value_at(z);
    }
    let hi = lms.value_at(Z_LINEAR)?;
    let slope = (hi - lms.value_at(Z95)?) / (Z_LINEAR - Z95);
    Some(hi + slope * (z - Z_LINEAR))
}

/// BMI at z for a child aged `months`: the reference table from 24 months,
/// a smooth infant curve before that.
fn bmi_at(table: &LmsTable, sex: Sex, months: f64, z: f64) -> Option<f64> {
    if months >= 24.0 {
        return value_at(&table.lms(Metric::BmiForAge, sex, months).ok()?, z);
    }
    let anchor = table.lms(Metric::BmiForAge, sex, 24.0).ok()?;
    let knots = if sex == Sex::Female { &INFANT_BMI_FEMALE } else { &INFANT_BMI_MALE };
    let mut curve = knots.to_vec();
    curve.push((24.0, anchor.m));
    let lms = Lms {
        l: anchor.l,
        m: interp(&curve, months),
        s: INFANT_BMI_S,
    };
    value_at(&lms, z)
}

struct Codes {
    planted: Vec<(u32, (CodeSystem, String), Domain)>,
    background_conditions: Vec<(CodeSystem, String)>,
    background_famhx: Vec<(CodeSystem, String)>,
    medications: Vec<(CodeSystem, String)>,
}

fn resolve_codes(config: &SynthConfig, registry: &FeatureRegistry) -> Result<Codes, SynthError> {
    let mut planted = Vec::new();
    for p in &config.planted_features {
        let spec = registry
            .get(p.feature_id)
            .ok_or(SynthError::UnknownPlantedFeature(p.feature_id))?;
        if spec.domain == Domain::Measurement || spec.codes.is_empty() {
            return Err(SynthError::InvalidConfig(format!(
                "feature {} cannot be planted as a coded event",
                p.feature_id
            )));
        }
        planted.push((p.feature_id, spec.codes[0].clone(), spec.domain));
    }
    let is_planted = |id: u32| config.planted_features.iter().any(|p| p.feature_id == id);
    let background = |domain: Domain| -> Vec<(CodeSystem, String)> {
        registry
            .entries()
            .iter()
            .filter(|e| e.domain == domain && !is_planted(e.feature_id) && !e.codes.is_empty())
            .map(|e| e.codes[0].clone())
            .collect()
    };
    Ok(Codes {
        planted,
        background_conditions: background(Domain::Condition),
        background_famhx: background(Domain::FamilyHistory),
        medications: background(Domain::Medication),
    })
}

/// Generate `config.n_patients` children; pure in `config`.
pub fn generate(
    config: &SynthConfig,
    registry: &FeatureRegistry,
    table: &LmsTable,
) -> Result<Vec<SyntheticPatient>, SynthError> {
    config.validate()?;
    let codes = resolve_codes(config, registry)?;
    for sex in [Sex::Female, Sex::Male] {
        if table.range(Metric::BmiForAge, sex).is_none() {
            return Err(SynthError::InvalidConfig("growth table has no BMI-for-age reference".into()));
        }
    }
    Ok((0..config.n_patients).map(|i| patient(config, &codes, table, i)).collect())
}

fn patient(config: &SynthConfig, codes: &Codes, table: &LmsTable, index: usize) -> SyntheticPatient {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let sex = if rng.random::<bool>() { Sex::Female } else { Sex::Male };
    let race = pick(
        &mut rng,
        &[(Race::White, 0.52), (Race::Black, 0.22), (Race::Asian, 0.07), (Race::Other, 0.11), (Race::Unknown, 0.08)],
    );
    let ethnicity = pick(
        &mut rng,
        &[(Ethnicity::Hispanic, 0.18), (Ethnicity::NonHispanic, 0.76), (Ethnicity::Unknown, 0.06)],
    );
    let insurance = pick(
        &mut rng,
        &[(Insurance::Public, 0.42), (Insurance::Private, 0.53), (Insurance::Unknown, 0.05)],
    );
    let site_idx = rng.random_range(0..config.sites.len());
    let region = format!("{:03}", 100 + 50 * site_idx + rng.random_range(0..10));
    let year = rng.random_range(config.birth_years.0..=config.birth_years.1);
    let birth_date = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year")
        + chrono::Duration::days(rng.random_range(0..365));
    let name = format!(
        "{} {}",
        GIVEN[rng.random_range(0..GIVEN.len())],
        FAMILY[rng.random_range(0..FAMILY.len())]
    );

    let short = rng.random::<f64>() < config.short_followup_rate;
    let followup_years = if short && config.min_followup_years > 2.0 {
        rng.random_range(2.0..config.min_followup_years)
    } else {
        rng.random_range(config.min_followup_years..=config.max_followup_years)
    };
    let followup_days = (followup_years * DAYS_PER_YEAR).round() as i64;
    let excluded = rng.random::<f64>() < config.exclusion_rate;
    let no_growth = rng.random::<f64>() < config.no_growth_rate;

    let carried: Vec<bool> = config
        .planted_features
        .iter()
        .map(|p| rng.random::<f64>() < p.carrier_rate)
        .collect();
    let log_odds: f64 = config
        .planted_features
        .iter()
        .zip(&carried)
        .filter(|(_, &c)| c)
        .map(|(p, _)| p.odds_multiplier.ln())
        .sum();
    let p = propensity(config.base_obesity_rate, log_odds);
    let mu = latent_mean(p);
    let z_max = if p == 0.0 { Z95 - 0.5 } else { Z_RANGE.1 };
    let height_z = normal(&mut rng);
    let head_z = normal(&mut rng);

    // Well-child schedule, then annual visits to the end of follow-up.
    let mut well: Vec<i64> = Vec::new();
    for &m in &config.infant_visit_months {
        let jitter = rng.random_range(-5..=5);
        let missed = rng.random::<f64>() < config.missed_visit_rate;
        if !missed {
            well.push(((m * DAYS_PER_MONTH).round() as i64 + jitter).max(3));
        }
    }
    let mut k = 3;
    while (k as f64) <= followup_years {
        let jitter = rng.random_range(-45..=45);
        let missed = rng.random::<f64>() < config.missed_visit_rate;
        if !missed {
            well.push(((k as f64 * DAYS_PER_YEAR).round() as i64 + jitter).min(followup_days));
        }
        k += 1;
    }
    well.sort_unstable();
    well.dedup();
    if well.last() != Some(&followup_days) {
        well.push(followup_days);
    }

    let mut record = PatientRecord::new(format!("syn{:06}", index), birth_date, sex);
    record.name = Some(name);
    record.race = race;
    record.ethnicity = ethnicity;
    record.insurance = insurance;
    record.region = Some(region);
    record.site = Some(config.sites[site_idx].clone());
    record.extraction_date = Some(birth_date + chrono::Duration::days(followup_days + rng.random_range(0..90)));

    let a = (1.0 - config.bmi_noise_sd.powi(2)).sqrt();
    let mut eps = normal(&mut rng);
    let mut prev_years: Option<f64> = None;
    let height_knots: &[(f64, f64)] = if sex == Sex::Female { &HEIGHT_FEMALE } else { &HEIGHT_MALE };
    let head_shift = if sex == Sex::Female { -0.8 } else { 0.0 };
    let twelve_months = (12.0 * DAYS_PER_MONTH).round() as i64;
    let hgb_day = well.iter().copied().min_by_key(|d| (d - twelve_months).abs());
    for &day in &well {
        let months = day as f64 / DAYS_PER_MONTH;
        let years = day as f64 / DAYS_PER_YEAR;
        if let Some(prev) = prev_years {
            let r = config.trajectory_rho.powf(years - prev);
            eps = r * eps + (1.0 - r * r).sqrt() * normal(&mut rng);
        }
        prev_years = Some(years);
        let eta = normal(&mut rng);
        let z = (mu + a * eps + config.bmi_noise_sd * eta).clamp(Z_RANGE.0, z_max);
        let height_noise = normal(&mut rng);
        let vitals: [f64; 5] = std::array::from_fn(|_| normal(&mut rng));
        if no_growth {
            continue;
        }
        let height = round_to(interp(height_knots, months) * (1.0 + 0.04 * height_z) + 0.4 * height_noise, 1);
        let Some(bmi) = bmi_at(table, sex, months, z) else { continue };
        let weight = round_to(bmi * (height / 100.0).powi(2), 2);
        record.events.push(ClinicalEvent::measurement(day, reserved::BODY_WEIGHT, weight, "kg"));
        record.events.push(ClinicalEvent::measurement(day, reserved::BODY_HEIGHT, height, "cm"));
        if months >= 24.0 {
            let recorded = round_to(weight / (height / 100.0).powi(2), 2);
            record.events.push(ClinicalEvent::measurement(day, reserved::BMI, recorded, "kg/m2"));
        } else {
            let hc = interp(&HEAD_CIRCUMFERENCE_MEDIAN, months) + head_shift + 1.2 * head_z + 0.3 * vitals[3];
            record.events.push(ClinicalEvent::measurement(day, HEAD_CIRCUMFERENCE, round_to(hc, 1), "cm"));
        }
        if years >= 3.0 {
            let sbp = 92.0 + 1.1 * years + 2.0 * z + 7.0 * vitals[0];
            let dbp = 55.0 + 0.7 * years + 1.0 * z + 6.0 * vitals[1];
            record.events.push(ClinicalEvent::measurement(day, SYSTOLIC, sbp.round(), "mm[Hg]"));
            record.events.push(ClinicalEvent::measurement(day, DIASTOLIC, dbp.round(), "mm[Hg]"));
        }
        let hr = (135.0 - 5.0 * years).max(70.0) + 9.0 * vitals[2];
        record.events.push(ClinicalEvent::measurement(day, HEART_RATE, hr.round(), "/min"));
        if Some(day) == hgb_day {
            let hgb = 11.8 + 0.8 * vitals[4];
            record.events.push(ClinicalEvent::measurement(day, HEMOGLOBIN, round_to(hgb, 1), "g/dL"));
            record
                .events
                .push(ClinicalEvent::coded(day, Domain::Procedure, CodeSystem::Cpt, MMR_VACCINE));
        }
    }

    // Planted features surface during infancy so every observation window sees them.
    let infant_visits: Vec<i64> = well.iter().copied().filter(|&d| d as f64 <= 24.0 * DAYS_PER_MONTH).collect();
    for ((_, (system, code), domain), &c) in codes.planted.iter().zip(&carried) {
        let choices = if infant_visits.is_empty() { &well[..1] } else { &infant_visits[..] };
        let day = choices[rng.random_range(0..choices.len())];
        if c {
            record.events.push(ClinicalEvent::coded(day, *domain, *system, code));
        }
    }
    let first_visit = well[0];
    for (system, code) in &codes.background_famhx {
        if rng.random::<f64>() < 0.08 {
            record
                .events
                .push(ClinicalEvent::coded(first_visit, Domain::FamilyHistory, *system, code));
        }
    }

    let n_sick = Poisson::new(config.sick_visits_per_year * followup_years + 1e-9)
        .map(|d| d.sample(&mut rng) as usize)
        .unwrap_or(0);
    for _ in 0..n_sick {
        let day = rng.random_range(14..=followup_days);
        let cond = rng.random_range(0..codes.background_conditions.len().max(1));
        let med = rng.random_range(0..codes.medications.len().max(1));
        let with_med = rng.random::<f64>() < 0.6;
        if let Some((system, code)) = codes.background_conditions.get(cond) {
            record.events.push(ClinicalEvent::coded(day, Domain::Condition, *system, code));
        }
        if let Some((system, code)) = codes.medications.get(med).filter(|_| with_med) {
            record.events.push(ClinicalEvent::coded(day, Domain::Medication, *system, code));
        }
    }
    let exclusion = reserved::EXCLUSIONS[rng.random_range(0..reserved::EXCLUSIONS.len())];
    let exclusion_day = rng.random_range(30..=followup_days);
    if excluded {
        record
            .events
            .push(ClinicalEvent::coded(exclusion_day, Domain::Condition, exclusion.0, exclusion.1));
    }
    record.sort_events();

    if config.skew_days > 0 {
        record = skew_dates(&record, config.seed, config.skew_days);
    }

    let series = bmi_series(&record);
    let labels = (2..=19u32)
        .filter_map(|age| {
            let target = (age as f64 * DAYS_PER_YEAR).round() as i64;
            label_at(&series, sex, table, target).map(|label| AgeLabel { age_years: age, label })
        })
        .collect();
    let carriers = config
        .planted_features
        .iter()
        .zip(&carried)
        .filter(|(_, &c)| c)
        .map(|(p, _)| p.feature_id)
        .collect();
    SyntheticPatient {
        record,
        truth: GroundTruth {
            propensity: p,
            carriers,
            labels,
        },
    }
}

/// Delimited cohort manifest, one row per child.
pub fn manifest(patients: &[SyntheticPatient]) -> String {
    let mut out = String::from("patient_id|file|sex|birth_date|site|n_events|propensity|carriers|obese_ages\n");
    for p in patients {
        let r = &p.record;
        let carriers: Vec<String> = p.truth.carriers.iter().map(u32::to_string).collect();
        let obese: Vec<String> = p
            .truth
            .labels
            .iter()
            .filter(|l| l.label.obese)
            .map(|l| l.age_years.to_string())
            .collect();
        let sex = serde_json::to_value(r.sex).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{}|{}.json|{}|{}|{}|{}|{:.6}|{}|{}",
            r.patient_id,
            r.patient_id,
            sex,
            r.birth_date,
            r.site.as_deref().unwrap_or(""),
            r.events.len(),
            p.truth.propensity,
            carriers.join(","),
            obese.join(","),
        );
    }
    out
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::growth::{assess, assess_weight_for_length, bmi, LmsTable, WeightStatus};
use crate::model::{Example, HorizonLabel};
use crate::record::{CodeSystem, Domain, PatientRecord, Sex, DAYS_PER_MONTH, DAYS_PER_YEAR};
use crate::registry::{convert_unit, reserved};
use crate::sequence::{encode_demographics, DemographicCardinalities, DemographicVector, Sequencer, TimeBinnedSequence};

pub const HORIZONS: usize = 3;
/// Labels use the BMI measurement closest to the target age within this many days.
pub const LABEL_TOLERANCE_DAYS: i64 = 182;

/// Subgroup keys attached to every example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strata {
    pub sex: String,
    pub race: String,
    pub ethnicity: String,
    pub payer: String,
    /// Weight status from the last weight-for-length reading under 24 months.
    pub wfl_category: String,
    pub site: String,
    /// Calendar year at the end of the observation window.
    pub index_year: i32,
}

impl Strata {
    pub fn keys(&self) -> [(&'static str, String); 7] {
        [
            ("sex", self.sex.clone()),
            ("race", self.race.clone()),
            ("ethnicity", self.ethnicity.clone()),
            ("payer", self.payer.clone()),
            ("wfl_category", self.wfl_category.clone()),
            ("site", self.site.clone()),
            ("index_year", self.index_year.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub patient_id: String,
    pub sequence: TimeBinnedSequence,
    pub demo: DemographicVector,
    pub labels: [Option<HorizonLabel>; HORIZONS],
    pub strata: Strata,
}

impl LabeledExample {
    pub fn window(&self) -> u32 {
        self.sequence.window_end_age_years
    }

    pub fn to_model_example(&self) -> Example {
        Example {
            bins: self.sequence.bins.clone(),
            demographics: self.demo.as_array(),
            labels: self.labels.to_vec(),
        }
    }
}

fn label_str<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Dated BMI values: recorded BMI observations, plus BMI computed from
/// same-day weight and height where no BMI was recorded that day.
pub fn bmi_series(record: &PatientRecord) -> Vec<(i64, f64)> {
    let mut weights: BTreeMap<i64, f64> = BTreeMap::new();
    let mut heights: BTreeMap<i64, f64> = BTreeMap::new();
    let mut recorded: BTreeMap<i64, f64> = BTreeMap::new();
    for ev in &record.events {
        if ev.domain != Domain::Measurement || ev.code_system != CodeSystem::Loinc {
            continue;
        }
        let (Some(v), unit) = (ev.value, ev.unit.as_deref()) else { continue };
        match ev.code.as_str() {
            reserved::BODY_WEIGHT => {
                if let Some(kg) = convert_unit(v, unit.unwrap_or("kg"), "kg") {
                    weights.insert(ev.age_days, kg);
                }
            }
            reserved::BODY_HEIGHT => {
                if let Some(cm) = convert_unit(v, unit.unwrap_or("cm"), "cm") {
                    heights.insert(ev.age_days, cm);
                }
            }
            reserved::BMI if v > 0.0 => {
                recorded.insert(ev.age_days, v);
            }
            _ => {}
        }
    }
    for (day, w) in &weights {
        if recorded.contains_key(day) {
            continue;
        }
        if let Some(h) = heights.get(day) {
            if let Ok(b) = bmi(*w, h / 100.0) {
                recorded.insert(*day, b);
            }
        }
    }
    recorded.into_iter().collect()
}

/// Label from the BMI reading nearest `target_days` (within tolerance);
/// `None` when there is no reading or the growth reference does not apply.
pub fn label_at(series: &[(i64, f64)], sex: Sex, table: &LmsTable, target_days: i64) -> Option<HorizonLabel> {
    let (day, value) = series
        .iter()
        .filter(|(d, _)| (d - target_days).abs() <= LABEL_TOLERANCE_DAYS)
        .min_by_key(|(d, _)| ((d - target_days).abs(), *d))?;
    let a = assess(table, sex, *day as f64 / DAYS_PER_MONTH, *value).ok()?;
    Some(HorizonLabel {
        obese: a.label == WeightStatus::Obese,
        bmi: *value,
    })
}

/// Labels at `window + 1 ..= window + 3` years.
pub fn horizon_labels(
    record: &PatientRecord,
    series: &[(i64, f64)],
    table: &LmsTable,
    window_years: u32,
) -> [Option<HorizonLabel>; HORIZONS] {
    std::array::from_fn(|h| {
        let target = ((window_years as usize + h + 1) as f64 * DAYS_PER_YEAR).round() as i64;
        label_at(series, record.sex, table, target)
    })
}

/// Weight-for-length category from the last weight and length recorded on
/// the same day before 24 months; "unknown" without a reference table.
pub fn wfl_category(record: &PatientRecord, table: &LmsTable) -> String {
    let limit = (24.0 * DAYS_PER_MONTH) as i64;
    let mut weights = BTreeMap::new();
    let mut lengths = BTreeMap::new();
    for ev in record.events.iter().filter(|e| e.age_days < limit && e.code_system == CodeSystem::Loinc) {
        let (Some(v), unit) = (ev.value, ev.unit.as_deref()) else { continue };
        match ev.code.as_str() {
            reserved::BODY_WEIGHT => {
                if let Some(kg) = convert_unit(v, unit.unwrap_or("kg"), "kg") {
                    weights.insert(ev.age_days, kg);
                }
            }
            reserved::BODY_HEIGHT => {
                if let Some(cm) = convert_unit(v, unit.unwrap_or("cm"), "cm") {
                    lengths.insert(ev.age_days, cm);
                }
            }
            _ => {}
        }
    }
    weights
        .iter()
        .rev()
        .find_map(|(day, w)| {
            let len = lengths.get(day)?;
            assess_weight_for_length(table, record.sex, *len, *w).ok()
        })
        .map_or_else(|| "unknown".to_string(), |a| label_str(&a.label))
}

pub fn strata(record: &PatientRecord, table: &LmsTable, window_years: u32) -> Strata {
    let end = record.date_at((window_years as f64 * DAYS_PER_YEAR).round() as i64);
    Strata {
        sex: label_str(&record.sex),
        race: label_str(&record.race),
        ethnicity: label_str(&record.ethnicity),
        payer: label_str(&record.insurance),
        wfl_category: wfl_category(record, table),
        site: record.site.clone().unwrap_or_else(|| "unknown".into()),
        index_year: chrono::Datelike::year(&end),
    }
}

/// One example per window in `windows` that has at least one labelled horizon.
pub fn build_examples(
    record: &PatientRecord,
    sequencer: &Sequencer,
    table: &LmsTable,
    windows: &[u32],
    card: &DemographicCardinalities,
) -> Vec<LabeledExample> {
    let series = bmi_series(record);
    windows
        .iter()
        .filter_map(|&w| {
            let labels = horizon_labels(record, &series, table, w);
            if labels.iter().all(Option::is_none) {
                return None;
            }
            let sequence = sequencer.build(record, w).ok()?;
            Some(LabeledExample {
                patient_id: record.patient_id.clone(),
                sequence,
                demo: encode_demographics(record, w, card),
                labels,
                strata: strata(record, table, w),
            })
        })
        .collect()
}

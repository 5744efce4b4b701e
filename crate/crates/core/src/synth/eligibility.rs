use serde::{Deserialize, Serialize};

use crate::eval::bmi_series;
use crate::record::{Domain, PatientRecord, DAYS_PER_YEAR};
use crate::registry::reserved;

/// Minimum span between the first and last charted event.
pub const MIN_HISTORY_YEARS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ineligible {
    ShortHistory,
    NoBmi,
    Excluded,
}

/// First failing criterion, or `None` when the record is eligible.
pub fn check_eligibility(record: &PatientRecord) -> Option<Ineligible> {
    let span = match (record.first_event_age_days(), record.last_event_age_days()) {
        (Some(a), Some(b)) => (b - a) as f64,
        _ => 0.0,
    };
    if span < MIN_HISTORY_YEARS * DAYS_PER_YEAR {
        return Some(Ineligible::ShortHistory);
    }
    if bmi_series(record).is_empty() {
        return Some(Ineligible::NoBmi);
    }
    let excluded = record.events.iter().any(|e| {
        e.domain == Domain::Condition
            && reserved::EXCLUSIONS
                .iter()
                .any(|(system, code)| e.code_system == *system && e.code == *code)
    });
    excluded.then_some(Ineligible::Excluded)
}

pub fn apply_eligibility(cohort: Vec<PatientRecord>) -> Vec<PatientRecord> {
    cohort.into_iter().filter(|r| check_eligibility(r).is_none()).collect()
}

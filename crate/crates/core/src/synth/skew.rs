use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::record::PatientRecord;

/// Default maximum date shift, in days either way.
pub const SKEW_DAYS: i64 = 180;

/// Per-patient offset in `[-max_days, max_days]`, a pure function of
/// `(patient_id, seed)`.
pub fn skew_offset(patient_id: &str, seed: u64, max_days: i64) -> i64 {
    let digest = Sha256::digest(patient_id.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(seed);
    rng.random_range(-max_days..=max_days)
}

/// Shift the birth and extraction dates by one per-patient offset. Events are
/// stored as ages, so every event date moves with the birth date.
pub fn skew_dates(record: &PatientRecord, seed: u64, max_days: i64) -> PatientRecord {
    let shift = chrono::Duration::days(skew_offset(&record.patient_id, seed, max_days));
    let mut out = record.clone();
    out.birth_date = record.birth_date + shift;
    out.extraction_date = record.extraction_date.map(|d| d + shift);
    out
}

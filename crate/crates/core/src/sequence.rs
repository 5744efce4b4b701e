//! Time-binned model inputs.
//!
//! A child's timeline is cut into bins (monthly to age 2, bimonthly after by
//! default). Each bin holds the set of input ids active in it. Sequences are
//! cached as text, one line per bin: `patient_id|bin|id,id,id`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{Domain, Ethnicity, Insurance, PatientRecord, Race, Sex, DAYS_PER_MONTH};
use crate::registry::{convert_unit, quantize, FeatureRegistry, InputVocab, RegistryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("invalid bin schedule: {0}")]
    InvalidSegments(String),
    #[error("age {age_days} days is outside the bin schedule")]
    OutOfSchedule { age_days: i64 },
    #[error("window of {years} years exceeds the schedule span")]
    WindowTooLong { years: u32 },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_month: u32,
    pub end_month: u32,
    pub width_months: u32,
}

impl Segment {
    pub const fn new(start_month: u32, end_month: u32, width_months: u32) -> Self {
        Self { start_month, end_month, width_months }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub segments: Vec<Segment>,
}

impl Default for ScheduleConfig {
    /// Monthly bins to 24 months, bimonthly to 240.
    fn default() -> Self {
        Self {
            segments: vec![Segment::new(0, 24, 1), Segment::new(24, 240, 2)],
        }
    }
}

impl ScheduleConfig {
    /// Quarterly to 12 months, half-yearly to 24, yearly to 240.
    pub fn coarse() -> Self {
        Self {
            segments: vec![Segment::new(0, 12, 3), Segment::new(12, 24, 6), Segment::new(24, 240, 12)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSchedule {
    segments: Vec<Segment>,
    /// Month marks; bin `i` covers `[boundaries[i], boundaries[i + 1])`.
    boundaries: Vec<u32>,
}

pub fn make_schedule(config: &ScheduleConfig) -> Result<BinSchedule, SequenceError> {
    let invalid = |m: String| Err(SequenceError::InvalidSegments(m));
    if config.segments.is_empty() {
        return invalid("no segments".into());
    }
    let mut boundaries = vec![0];
    let mut cursor = 0;
    for s in &config.segments {
        if s.start_month != cursor {
            return invalid(format!("segment starting at month {} should start at {cursor}", s.start_month));
        }
        if s.end_month <= s.start_month {
            return invalid(format!("segment {}..{} is empty", s.start_month, s.end_month));
        }
        if s.width_months == 0 || (s.end_month - s.start_month) % s.width_months != 0 {
            return invalid(format!(
                "width {} does not divide segment {}..{}",
                s.width_months, s.start_month, s.end_month
            ));
        }
        boundaries.extend((s.start_month + s.width_months..=s.end_month).step_by(s.width_months as usize));
        cursor = s.end_month;
    }
    Ok(BinSchedule {
        segments: config.segments.clone(),
        boundaries,
    })
}

impl Default for BinSchedule {
    fn default() -> Self {
        make_schedule(&ScheduleConfig::default()).expect("default schedule is valid")
    }
}

impl BinSchedule {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn boundaries(&self) -> &[u32] {
        &self.boundaries
    }

    pub fn bin_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn span_months(&self) -> u32 {
        *self.boundaries.last().expect("at least one boundary")
    }

    /// `[start, end)` months of bin `i`.
    pub fn bin_bounds(&self, i: usize) -> (u32, u32) {
        (self.boundaries[i], self.boundaries[i + 1])
    }

    /// Number of bins starting before the window end.
    pub fn bins_in_window(&self, window_years: u32) -> Result<usize, SequenceError> {
        let end = window_years * 12;
        if end > self.span_months() {
            return Err(SequenceError::WindowTooLong { years: window_years });
        }
        Ok(self.boundaries[..self.bin_count()].partition_point(|&b| b < end))
    }

    pub fn bin_index(&self, age_days: i64) -> Result<usize, SequenceError> {
        let months = age_days as f64 / DAYS_PER_MONTH;
        if age_days < 0 || months >= self.span_months() as f64 {
            return Err(SequenceError::OutOfSchedule { age_days });
        }
        Ok(self.boundaries.partition_point(|&b| b as f64 <= months) - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBinnedSequence {
    pub patient_id: String,
    pub window_end_age_years: u32,
    /// Sorted, deduplicated input ids per bin, in age order.
    pub bins: Vec<Vec<u32>>,
}

impl TimeBinnedSequence {
    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(Vec::is_empty)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, ids) in self.bins.iter().enumerate() {
            let ids: Vec<String> = ids.iter().map(u32::to_string).collect();
            out.push_str(&format!("{}|{}|{}\n", self.patient_id, i, ids.join(",")));
        }
        out
    }

    /// Parse cached sequences. Bins must be listed in order starting at 0; the
    /// window is recovered against `schedule`.
    pub fn parse_text(text: &str, schedule: &BinSchedule) -> Result<Vec<Self>, SequenceError> {
        let mut out: Vec<Self> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| SequenceError::Parse { line: i + 1, message: message.into() };
            let mut parts = line.splitn(3, '|');
            let (Some(pid), Some(bin), Some(ids)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected patient_id|bin|ids"));
            };
            let bin: usize = bin.parse().map_err(|_| err("bad bin index"))?;
            let ids = if ids.is_empty() {
                Vec::new()
            } else {
                ids.split(',')
                    .map(|s| s.parse::<u32>().map_err(|_| err("bad input id")))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let start_new = bin == 0;
            match out.last_mut() {
                Some(seq) if !start_new && seq.patient_id == pid && seq.bins.len() == bin => seq.bins.push(ids),
                _ if start_new => out.push(Self {
                    patient_id: pid.to_string(),
                    window_end_age_years: 0,
                    bins: vec![ids],
                }),
                _ => return Err(err("bins out of order")),
            }
        }
        for seq in &mut out {
            let end_month = schedule.boundaries.get(seq.bins.len()).copied().unwrap_or(u32::MAX);
            if end_month % 12 != 0 || end_month > schedule.span_months() {
                return Err(SequenceError::Parse {
                    line: 0,
                    message: format!("{}: bin count does not end on a whole year", seq.patient_id),
                });
            }
            seq.window_end_age_years = end_month / 12;
        }
        Ok(out)
    }
}

/// Frozen registry + schedule, ready to turn records into model inputs.
#[derive(Debug, Clone)]
pub struct Sequencer {
    registry: FeatureRegistry,
    vocab: InputVocab,
    schedule: BinSchedule,
}

impl Sequencer {
    pub fn new(registry: FeatureRegistry, schedule: BinSchedule) -> Result<Self, SequenceError> {
        let vocab = registry.input_vocab()?;
        Ok(Self { registry, vocab, schedule })
    }

    pub fn registry(&self) -> &FeatureRegistry {
        &self.registry
    }

    pub fn vocab(&self) -> &InputVocab {
        &self.vocab
    }

    pub fn schedule(&self) -> &BinSchedule {
        &self.schedule
    }

    /// Input ids of events strictly before the window end, OR-aggregated per bin.
    pub fn build(&self, record: &PatientRecord, window_years: u32) -> Result<TimeBinnedSequence, SequenceError> {
        let n_bins = self.schedule.bins_in_window(window_years)?;
        let end_months = (window_years * 12) as f64;
        let mut bins = vec![BTreeSet::new(); n_bins];
        for ev in &record.events {
            if ev.age_months() >= end_months {
                continue;
            }
            let bin = self.schedule.bin_index(ev.age_days)?;
            if let Some(id) = self.input_id(ev) {
                bins[bin].insert(id);
            }
        }
        Ok(TimeBinnedSequence {
            patient_id: record.patient_id.clone(),
            window_end_age_years: window_years,
            bins: bins.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    fn input_id(&self, ev: &crate::record::ClinicalEvent) -> Option<u32> {
        let feature = self.registry.map_code(ev.code_system, &ev.code)?;
        let spec = self.registry.get(feature)?;
        if spec.domain != ev.domain {
            return None;
        }
        let bin = match &spec.quantization {
            None => None,
            Some(q) => {
                let mut value = ev.value?;
                if let (Some(want), Some(have)) = (q.unit.as_deref(), ev.unit.as_deref()) {
                    value = convert_unit(value, have, want)?;
                }
                Some(quantize(q, value).ok()?)
            }
        };
        self.vocab.input_id(feature, bin)
    }

    /// Measurement values (in registry units) per quantized feature, for
    /// fitting cohort quantiles.
    pub fn measurement_values<'a>(
        registry: &FeatureRegistry,
        records: impl IntoIterator<Item = &'a PatientRecord>,
    ) -> BTreeMap<u32, Vec<f64>> {
        let mut out: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for r in records {
            for ev in r.events.iter().filter(|e| e.domain == Domain::Measurement) {
                let Some(f) = registry.map_code(ev.code_system, &ev.code) else { continue };
                let Some(q) = registry.get(f).and_then(|s| s.quantization.as_ref()) else { continue };
                let Some(mut v) = ev.value else { continue };
                if let (Some(want), Some(have)) = (q.unit.as_deref(), ev.unit.as_deref()) {
                    match convert_unit(v, have, want) {
                        Some(c) => v = c,
                        None => continue,
                    }
                }
                out.entry(f).or_default().push(v);
            }
        }
        out
    }
}

/// Demographic categorical indices; 0 means unknown for every field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemographicVector {
    pub sex: usize,
    pub race: usize,
    pub ethnicity: usize,
    pub insurance: usize,
    pub region: usize,
    pub window_age: usize,
}

impl DemographicVector {
    pub const FIELDS: usize = 6;

    pub fn as_array(&self) -> [usize; Self::FIELDS] {
        [self.sex, self.race, self.ethnicity, self.insurance, self.region, self.window_age]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicCardinalities {
    pub sex: usize,
    pub race: usize,
    pub ethnicity: usize,
    pub insurance: usize,
    pub region: usize,
    pub window_age: usize,
}

impl Default for DemographicCardinalities {
    fn default() -> Self {
        Self {
            sex: 3,
            race: 5,
            ethnicity: 3,
            insurance: 3,
            region: 16,
            window_age: 11,
        }
    }
}

impl DemographicCardinalities {
    pub fn as_array(&self) -> [usize; DemographicVector::FIELDS] {
        [self.sex, self.race, self.ethnicity, self.insurance, self.region, self.window_age]
    }
}

/// Stable bucket in `1..cardinality` for a postal prefix (0 when absent).
pub fn region_bucket(prefix: Option<&str>, cardinality: usize) -> usize {
    let Some(prefix) = prefix.filter(|p| !p.is_empty()) else { return 0 };
    if cardinality < 2 {
        return 0;
    }
    let digest = Sha256::digest(prefix.to_ascii_uppercase().as_bytes());
    let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    1 + (h % (cardinality as u64 - 1)) as usize
}

pub fn encode_demographics(
    record: &PatientRecord,
    window_years: u32,
    card: &DemographicCardinalities,
) -> DemographicVector {
    let within = |i: usize, n: usize| if i < n { i } else { 0 };
    let sex = match record.sex {
        Sex::Unknown => 0,
        Sex::Female => 1,
        Sex::Male => 2,
    };
    let race = match record.race {
        Race::Unknown => 0,
        Race::Asian => 1,
        Race::Black => 2,
        Race::White => 3,
        Race::Other => 4,
    };
    let ethnicity = match record.ethnicity {
        Ethnicity::Unknown => 0,
        Ethnicity::Hispanic => 1,
        Ethnicity::NonHispanic => 2,
    };
    let insurance = match record.insurance {
        Insurance::Unknown => 0,
        Insurance::Private => 1,
        Insurance::Public => 2,
    };
    DemographicVector {
        sex: within(sex, card.sex),
        race: within(race, card.race),
        ethnicity: within(ethnicity, card.ethnicity),
        insurance: within(insurance, card.insurance),
        region: region_bucket(record.region.as_deref(), card.region),
        window_age: within(window_years as usize, card.window_age),
    }
}

//! CDC growth-chart math: BMI, LMS z-scores, percentiles and weight status.
//!
//! Reference tables are plain text, one row per line:
//! `metric|sex|key|L|M|S`, with `metric` one of `bmi_for_age` (key = age in
//! months) or `weight_for_length` (key = recumbent length in cm). Lines
//! starting with `#` are comments. L, M and S are linearly interpolated
//! between bracketing rows.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::record::Sex;

/// CDC 2000 BMI-for-age reference, 24 to 240.5 months.
pub const CDC_BMI_FOR_AGE: &str = include_str!("../data/cdc_bmi_for_age.lms");

pub const OBESE_PERCENTILE: f64 = 95.0;
pub const OVERWEIGHT_PERCENTILE: f64 = 85.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("inputs must be positive")]
    NonPositiveInput,
    #[error("{metric:?} key {key} is outside the reference range for {sex:?}")]
    OutOfRange { metric: Metric, sex: Sex, key: f64 },
    #[error("reference values are sex-specific; sex is unknown")]
    UnknownSex,
    #[error("no {metric:?} reference loaded for {sex:?}")]
    MissingReference { metric: Metric, sex: Sex },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading reference table: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BmiForAge,
    WeightForLength,
}

impl Metric {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "bmi_for_age" => Some(Metric::BmiForAge),
            "weight_for_length" => Some(Metric::WeightForLength),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lms {
    pub l: f64,
    pub m: f64,
    pub s: f64,
}

impl Lms {
    /// z-score of measurement `x` under these parameters.
    pub fn z(&self, x: f64) -> f64 {
        if self.l == 0.0 {
            (x / self.m).ln() / self.s
        } else {
            ((x / self.m).powf(self.l) - 1.0) / (self.l * self.s)
        }
    }

    /// Measurement at z-score `z`; `None` where the Box-Cox inverse is undefined.
    pub fn value_at(&self, z: f64) -> Option<f64> {
        if self.l == 0.0 {
            return Some(self.m * (self.s * z).exp());
        }
        let base = 1.0 + self.l * self.s * z;
        (base > 0.0).then(|| self.m * base.powf(1.0 / self.l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Row {
    key: f64,
    lms: Lms,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmsTable {
    rows: BTreeMap<(Metric, Sex), Vec<Row>>,
}

impl LmsTable {
    pub fn parse(text: &str) -> Result<Self, GrowthError> {
        let mut rows: BTreeMap<(Metric, Sex), Vec<Row>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| GrowthError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split('|').collect();
            let [metric, sex, key, l, m, s] = f.as_slice() else {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            };
            let metric = Metric::parse(metric).ok_or_else(|| err(format!("unknown metric `{metric}`")))?;
            let sex = match *sex {
                "male" => Sex::Male,
                "female" => Sex::Female,
                other => return Err(err(format!("unknown sex `{other}`"))),
            };
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            let row = Row {
                key: num(key)?,
                lms: Lms { l: num(l)?, m: num(m)?, s: num(s)? },
            };
            if !(row.lms.m > 0.0 && row.lms.s > 0.0 && row.lms.l.is_finite() && row.key.is_finite()) {
                return Err(err("M and S must be positive".into()));
            }
            let list = rows.entry((metric, sex)).or_default();
            if list.last().is_some_and(|prev| prev.key >= row.key) {
                return Err(err("keys must be strictly increasing".into()));
            }
            list.push(row);
        }
        Ok(Self { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GrowthError> {
        let text = std::fs::read_to_string(path).map_err(|e| GrowthError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// The shipped CDC BMI-for-age table.
    pub fn cdc_bmi() -> Self {
        Self::parse(CDC_BMI_FOR_AGE).expect("shipped CDC table is valid")
    }

    /// Add another table's rows (e.g. a weight-for-length file).
    pub fn merge(&mut self, other: LmsTable) {
        self.rows.extend(other.rows);
    }

    pub fn has(&self, metric: Metric) -> bool {
        self.rows.keys().any(|(m, _)| *m == metric)
    }

    /// Key range covered for `(metric, sex)`.
    pub fn range(&self, metric: Metric, sex: Sex) -> Option<(f64, f64)> {
        let rows = self.rows.get(&(metric, sex))?;
        Some((rows.first()?.key, rows.last()?.key))
    }

    /// Row keys for `(metric, sex)`.
    pub fn keys(&self, metric: Metric, sex: Sex) -> Vec<f64> {
        self.rows
            .get(&(metric, sex))
            .map(|r| r.iter().map(|row| row.key).collect())
            .unwrap_or_default()
    }

    /// L, M, S at `key`, linearly interpolated between bracketing rows.
    pub fn lms(&self, metric: Metric, sex: Sex, key: f64) -> Result<Lms, GrowthError> {
        if sex == Sex::Unknown {
            return Err(GrowthError::UnknownSex);
        }
        let rows = self
            .rows
            .get(&(metric, sex))
            .ok_or(GrowthError::MissingReference { metric, sex })?;
        let out_of_range = GrowthError::OutOfRange { metric, sex, key };
        let (first, last) = (rows.first().ok_or(out_of_range.clone())?, rows[rows.len() - 1]);
        if !(key >= first.key && key <= last.key) {
            return Err(out_of_range);
        }
        let hi = rows.partition_point(|r| r.key < key);
        if rows[hi].key == key {
            return Ok(rows[hi].lms);
        }
        let (a, b) = (rows[hi - 1], rows[hi]);
        let t = (key - a.key) / (b.key - a.key);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        Ok(Lms {
            l: lerp(a.lms.l, b.lms.l),
            m: lerp(a.lms.m, b.lms.m),
            s: lerp(a.lms.s, b.lms.s),
        })
    }

    /// z-score of `x` for `(metric, sex)` at `key`.
    pub fn lms_z(&self, metric: Metric, sex: Sex, key: f64, x: f64) -> Result<f64, GrowthError> {
        if !(x > 0.0) {
            return Err(GrowthError::NonPositiveInput);
        }
        Ok(self.lms(metric, sex, key)?.z(x))
    }
}

/// Body mass index in kg/m².
pub fn bmi(weight_kg: f64, height_m: f64) -> Result<f64, GrowthError> {
    if !(weight_kg > 0.0 && height_m > 0.0) {
        return Err(GrowthError::NonPositiveInput);
    }
    Ok(weight_kg / (height_m * height_m))
}

/// Standard normal CDF, in percent.
pub fn percentile_from_z(z: f64) -> f64 {
    50.0 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightStatus {
    Normal,
    Overweight,
    Obese,
}

impl WeightStatus {
    pub fn from_percentile(p: f64) -> Self {
        if p >= OBESE_PERCENTILE {
            WeightStatus::Obese
        } else if p >= OVERWEIGHT_PERCENTILE {
            WeightStatus::Overweight
        } else {
            WeightStatus::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthAssessment {
    pub value: f64,
    pub z: f64,
    pub percentile: f64,
    pub label: WeightStatus,
}

impl GrowthAssessment {
    fn from_z(value: f64, z: f64) -> Self {
        let percentile = percentile_from_z(z);
        Self {
            value,
            z,
            percentile,
            label: WeightStatus::from_percentile(percentile),
        }
    }
}

/// BMI-for-age assessment (ages 24-240 months).
pub fn assess(table: &LmsTable, sex: Sex, age_months: f64, bmi: f64) -> Result<GrowthAssessment, GrowthError> {
    let z = table.lms_z(Metric::BmiForAge, sex, age_months, bmi)?;
    Ok(GrowthAssessment::from_z(bmi, z))
}

/// Weight-for-length assessment (infants, keyed by length in cm).
pub fn assess_weight_for_length(
    table: &LmsTable,
    sex: Sex,
    length_cm: f64,
    weight_kg: f64,
) -> Result<GrowthAssessment, GrowthError> {
    let z = table.lms_z(Metric::WeightForLength, sex, length_cm, weight_kg)?;
    Ok(GrowthAssessment::from_z(weight_kg, z))
}

/// Percentile reference curve sampled at each table key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileCurve {
    pub percentile: f64,
    pub points: Vec<(f64, f64)>,
}

/// Reference curves for charting; percentiles are given in percent.
pub fn percentile_curves(
    table: &LmsTable,
    metric: Metric,
    sex: Sex,
    percentiles: &[f64],
) -> Result<Vec<PercentileCurve>, GrowthError> {
    let keys = table.keys(metric, sex);
    if keys.is_empty() {
        return Err(GrowthError::MissingReference { metric, sex });
    }
    let normal = statrs::distribution::Normal::standard();
    percentiles
        .iter()
        .map(|&p| {
            let z = statrs::distribution::ContinuousCDF::inverse_cdf(&normal, p / 100.0);
            let points = keys
                .iter()
                .filter_map(|&k| {
                    let v = table.lms(metric, sex, k).ok()?.value_at(z)?;
                    Some((k, v))
                })
                .collect();
            Ok(PercentileCurve { percentile: p, points })
        })
        .collect()
}

//! Canonical in-memory form of one child's chart.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Days per month used for every age-to-month conversion.
pub const DAYS_PER_MONTH: f64 = 30.4375;
/// Days per year (12 mean months).
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Asian,
    Black,
    White,
    Other,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ethnicity {
    Hispanic,
    NonHispanic,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Insurance {
    Private,
    Public,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Condition,
    Medication,
    Procedure,
    Measurement,
    FamilyHistory,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Condition,
        Domain::FamilyHistory,
        Domain::Medication,
        Domain::Measurement,
        Domain::Procedure,
    ];

    /// Short token used by the registry file format.
    pub fn token(self) -> &'static str {
        match self {
            Domain::Condition => "cond",
            Domain::FamilyHistory => "famhx",
            Domain::Medication => "med",
            Domain::Measurement => "meas",
            Domain::Procedure => "proc",
        }
    }

    pub fn from_token(s: &str) -> Option<Domain> {
        Domain::ALL.into_iter().find(|d| d.token() == s)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Domain::Condition => "condition",
            Domain::Medication => "medication",
            Domain::Procedure => "procedure",
            Domain::Measurement => "measurement",
            Domain::FamilyHistory => "family_history",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeSystem {
    #[serde(rename = "SNOMED")]
    Snomed,
    #[serde(rename = "RxNorm")]
    RxNorm,
    #[serde(rename = "CPT")]
    Cpt,
    #[serde(rename = "LOINC")]
    Loinc,
    #[serde(rename = "local")]
    Local,
}

impl CodeSystem {
    pub const ALL: [CodeSystem; 5] = [
        CodeSystem::Snomed,
        CodeSystem::RxNorm,
        CodeSystem::Cpt,
        CodeSystem::Loinc,
        CodeSystem::Local,
    ];

    /// Canonical FHIR `Coding.system` URI.
    pub fn uri(self) -> &'static str {
        match self {
            CodeSystem::Snomed => "http://snomed.info/sct",
            CodeSystem::RxNorm => "http://www.nlm.nih.gov/research/umls/rxnorm",
            CodeSystem::Cpt => "http://www.ama-assn.org/go/cpt",
            CodeSystem::Loinc => "http://loinc.org",
            CodeSystem::Local => "urn:pedrisk:local",
        }
    }

    pub fn from_uri(uri: &str) -> Option<CodeSystem> {
        CodeSystem::ALL.into_iter().find(|c| c.uri() == uri)
    }

    pub fn name(self) -> &'static str {
        match self {
            CodeSystem::Snomed => "SNOMED",
            CodeSystem::RxNorm => "RxNorm",
            CodeSystem::Cpt => "CPT",
            CodeSystem::Loinc => "LOINC",
            CodeSystem::Local => "local",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeSystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CodeSystem::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown code system `{s}`"))
    }
}

/// One dated clinical fact on the child's timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    pub age_days: i64,
    pub domain: Domain,
    pub code_system: CodeSystem,
    pub code: String,
    /// Present iff `domain` is [`Domain::Measurement`].
    pub value: Option<f64>,
    pub unit: Option<String>,
}

impl ClinicalEvent {
    pub fn coded(age_days: i64, domain: Domain, code_system: CodeSystem, code: &str) -> Self {
        Self {
            age_days,
            domain,
            code_system,
            code: code.to_string(),
            value: None,
            unit: None,
        }
    }

    pub fn measurement(age_days: i64, code: &str, value: f64, unit: &str) -> Self {
        Self {
            age_days,
            domain: Domain::Measurement,
            code_system: CodeSystem::Loinc,
            code: code.to_string(),
            value: Some(value),
            unit: Some(unit.to_string()),
        }
    }

    pub fn age_months(&self) -> f64 {
        self.age_days as f64 / DAYS_PER_MONTH
    }

    /// Total order used to canonicalize event lists.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.age_days
            .cmp(&other.age_days)
            .then(self.domain.cmp(&other.domain))
            .then(self.code_system.cmp(&other.code_system))
            .then_with(|| self.code.cmp(&other.code))
            .then_with(|| match (self.value, other.value) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
            .then_with(|| self.unit.cmp(&other.unit))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub name: Option<String>,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub race: Race,
    pub ethnicity: Ethnicity,
    pub insurance: Insurance,
    /// Three-character postal prefix of the home address.
    pub region: Option<String>,
    /// Managing organization, used as the site stratum.
    pub site: Option<String>,
    pub extraction_date: Option<NaiveDate>,
    /// Sorted by [`ClinicalEvent::canonical_cmp`].
    pub events: Vec<ClinicalEvent>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, birth_date: NaiveDate, sex: Sex) -> Self {
        Self {
            patient_id: patient_id.into(),
            name: None,
            birth_date,
            sex,
            race: Race::Unknown,
            ethnicity: Ethnicity::Unknown,
            insurance: Insurance::Unknown,
            region: None,
            site: None,
            extraction_date: None,
            events: Vec::new(),
        }
    }

    pub fn sort_events(&mut self) {
        self.events.sort_by(|a, b| a.canonical_cmp(b));
    }

    /// Age of the latest event, or `None` for an empty chart.
    pub fn last_event_age_days(&self) -> Option<i64> {
        self.events.iter().map(|e| e.age_days).max()
    }

    pub fn first_event_age_days(&self) -> Option<i64> {
        self.events.iter().map(|e| e.age_days).min()
    }

    pub fn date_at(&self, age_days: i64) -> NaiveDate {
        self.birth_date + chrono::Duration::days(age_days)
    }
}

//! FHIR R4 ingest: bundle parsing and normalization into [`PatientRecord`].
//!
//! [`PatientRecord`]: crate::record::PatientRecord

mod normalize;
pub mod resources;

use serde_json::Value;
use thiserror::Error;

pub use normalize::{parse_fhir_date, to_patient_record};
use resources::{Coverage, FamilyMemberHistory, MedicationRequest, Observation, Patient, Procedure};
pub use resources::{Bundle, Condition, Resource};

pub const US_CORE_RACE: &str = "http://hl7.org/fhir/us/core/StructureDefinition/us-core-race";
pub const US_CORE_ETHNICITY: &str =
    "http://hl7.org/fhir/us/core/StructureDefinition/us-core-ethnicity";
pub const ACT_CODE: &str = "http://terminology.hl7.org/CodeSystem/v3-ActCode";
pub const SOPT: &str = "https://nahdo.org/sopt";
pub const UCUM: &str = "http://unitsofmeasure.org";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FhirError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("bundle contains no Patient resource")]
    MissingPatient,
    #[error("bundle contains {0} Patient resources")]
    MultiplePatients(usize),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("{resource} references {reference}, not the bundle's patient")]
    SubjectMismatch { resource: String, reference: String },
    #[error("{resource} is dated {age_days} days before birth")]
    NegativeAge { resource: String, age_days: i64 },
    #[error("{0} has no usable clinical date")]
    MissingDate(String),
    #[error("{resource} is dated after the extraction date")]
    FutureEvent { resource: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    PostedBundle,
    Fetched,
}

/// One decoded Bundle page.
#[derive(Debug, Clone, Default)]
pub struct BundlePage {
    pub entries: Vec<(Option<String>, Resource)>,
    pub next: Option<String>,
    pub timestamp: Option<String>,
    /// Entries skipped because their resource type is not consumed.
    pub warnings: usize,
}

/// Typed resources for exactly one patient.
#[derive(Debug, Clone)]
pub struct FhirResourceSet {
    pub patient: Patient,
    pub patient_full_url: Option<String>,
    pub observations: Vec<Observation>,
    pub conditions: Vec<Condition>,
    pub medication_requests: Vec<MedicationRequest>,
    pub procedures: Vec<Procedure>,
    pub family_histories: Vec<FamilyMemberHistory>,
    pub coverages: Vec<Coverage>,
    pub source: Source,
    pub timestamp: Option<String>,
    pub warnings: usize,
}

impl FhirResourceSet {
    pub fn patient_id(&self) -> &str {
        self.patient.id.as_deref().unwrap_or_default()
    }

    /// Group decoded entries, enforcing the one-patient and subject invariants.
    pub fn assemble(
        entries: Vec<(Option<String>, Resource)>,
        source: Source,
        timestamp: Option<String>,
        warnings: usize,
    ) -> Result<Self, FhirError> {
        let n_patients = entries
            .iter()
            .filter(|(_, r)| matches!(r, Resource::Patient(_)))
            .count();
        match n_patients {
            0 => return Err(FhirError::MissingPatient),
            1 => {}
            n => return Err(FhirError::MultiplePatients(n)),
        }
        let (patient_full_url, patient) = entries
            .iter()
            .find_map(|(url, r)| match r {
                Resource::Patient(p) => Some((url.clone(), p.clone())),
                _ => None,
            })
            .expect("counted above");
        let patient_id = patient.id.clone().unwrap_or_default();

        let mut set = FhirResourceSet {
            patient,
            patient_full_url,
            observations: Vec::new(),
            conditions: Vec::new(),
            medication_requests: Vec::new(),
            procedures: Vec::new(),
            family_histories: Vec::new(),
            coverages: Vec::new(),
            source,
            timestamp,
            warnings,
        };
        for (_, resource) in entries {
            if let Some(subject) = resource.subject() {
                let reference = subject.reference.as_deref().unwrap_or_default();
                if !references_patient(reference, &patient_id, set.patient_full_url.as_deref()) {
                    return Err(FhirError::SubjectMismatch {
                        resource: describe(&resource),
                        reference: reference.to_string(),
                    });
                }
            }
            match resource {
                Resource::Patient(_) => {}
                Resource::Observation(r) => set.observations.push(r),
                Resource::Condition(r) => set.conditions.push(r),
                Resource::MedicationRequest(r) => set.medication_requests.push(r),
                Resource::Procedure(r) => set.procedures.push(r),
                Resource::FamilyMemberHistory(r) => set.family_histories.push(r),
                Resource::Coverage(r) => set.coverages.push(r),
            }
        }
        Ok(set)
    }
}

fn describe(resource: &Resource) -> String {
    match resource.id() {
        Some(id) => format!("{}/{}", resource.type_name(), id),
        None => resource.type_name().to_string(),
    }
}

fn references_patient(reference: &str, patient_id: &str, full_url: Option<&str>) -> bool {
    if reference.is_empty() {
        return false;
    }
    let relative = format!("Patient/{patient_id}");
    reference == relative
        || full_url == Some(reference)
        || reference.ends_with(&format!("/{relative}"))
}

/// Parse a posted Bundle into a resource set for a single patient.
pub fn parse_bundle(raw: &[u8]) -> Result<FhirResourceSet, FhirError> {
    let page = parse_page(raw)?;
    FhirResourceSet::assemble(page.entries, Source::PostedBundle, page.timestamp, page.warnings)
}

/// Decode one Bundle document without the single-patient checks.
pub fn parse_page(raw: &[u8]) -> Result<BundlePage, FhirError> {
    let text =
        std::str::from_utf8(raw).map_err(|e| FhirError::MalformedDocument(e.to_string()))?;
    let doc: Value =
        serde_json::from_str(text).map_err(|e| FhirError::MalformedDocument(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| FhirError::SchemaViolation("document is not a JSON object".into()))?;
    match obj.get("resourceType").and_then(Value::as_str) {
        Some("Bundle") => {}
        Some(other) => {
            return Err(FhirError::SchemaViolation(format!(
                "expected a Bundle, found {other}"
            )))
        }
        None => return Err(FhirError::SchemaViolation("missing resourceType".into())),
    }
    check_fhir_version(obj.get("meta"))?;
    match obj.get("type").and_then(Value::as_str) {
        Some("searchset" | "collection") => {}
        Some(other) => {
            return Err(FhirError::SchemaViolation(format!(
                "unsupported Bundle.type `{other}`"
            )))
        }
        None => return Err(FhirError::SchemaViolation("Bundle.type is required".into())),
    }

    let mut page = BundlePage {
        timestamp: obj
            .get("timestamp")
            .and_then(Value::as_str)
            .map(str::to_string),
        ..BundlePage::default()
    };
    if let Some(links) = obj.get("link") {
        let links = links
            .as_array()
            .ok_or_else(|| FhirError::SchemaViolation("Bundle.link must be an array".into()))?;
        for link in links {
            if link.get("relation").and_then(Value::as_str) == Some("next") {
                page.next = link.get("url").and_then(Value::as_str).map(str::to_string);
            }
        }
    }

    let entries = match obj.get("entry") {
        None | Some(Value::Null) => return Ok(page),
        Some(Value::Array(entries)) => entries,
        Some(_) => return Err(FhirError::SchemaViolation("Bundle.entry must be an array".into())),
    };
    for entry in entries {
        let full_url = entry
            .get("fullUrl")
            .and_then(Value::as_str)
            .map(str::to_string);
        if entry.pointer("/search/mode").and_then(Value::as_str) == Some("outcome") {
            page.warnings += 1;
            continue;
        }
        let resource = entry
            .get("resource")
            .ok_or_else(|| FhirError::SchemaViolation("Bundle.entry without resource".into()))?;
        let Some(kind) = resource.get("resourceType").and_then(Value::as_str) else {
            return Err(FhirError::SchemaViolation(
                "entry resource missing resourceType".into(),
            ));
        };
        if !Resource::TYPES.contains(&kind) {
            log::warn!("skipping unsupported resource type {kind}");
            page.warnings += 1;
            continue;
        }
        check_fhir_version(resource.get("meta"))?;
        let resource: Resource = serde_json::from_value(resource.clone())
            .map_err(|e| FhirError::SchemaViolation(format!("{kind}: {e}")))?;
        validate(&resource)?;
        page.entries.push((full_url, resource));
    }
    Ok(page)
}

fn check_fhir_version(meta: Option<&Value>) -> Result<(), FhirError> {
    match meta.and_then(|m| m.get("fhirVersion")).and_then(Value::as_str) {
        Some(v) if !v.starts_with("4.0") => Err(FhirError::SchemaViolation(format!(
            "FHIR version {v} is not supported (R4 only)"
        ))),
        _ => Ok(()),
    }
}

fn stu3(what: &str) -> FhirError {
    FhirError::SchemaViolation(format!("{what} is STU3 content; only R4 is accepted"))
}

/// Required-element and version checks beyond what deserialization enforces.
fn validate(resource: &Resource) -> Result<(), FhirError> {
    let missing = |path: &str| FhirError::SchemaViolation(format!("{path} is required"));
    match resource {
        Resource::Patient(p) => {
            if p.id.as_deref().is_none_or(str::is_empty) {
                return Err(missing("Patient.id"));
            }
            let birth = p.birth_date.as_deref().ok_or_else(|| missing("Patient.birthDate"))?;
            if birth.len() != 10 || parse_fhir_date(birth).is_none() {
                return Err(FhirError::SchemaViolation(format!(
                    "Patient.birthDate `{birth}` is not a full date"
                )));
            }
        }
        Resource::Condition(c) => {
            if matches!(c.clinical_status, Some(Value::String(_))) {
                return Err(stu3("Condition.clinicalStatus as code"));
            }
            if c.asserted_date.is_some() {
                return Err(stu3("Condition.assertedDate"));
            }
        }
        Resource::Procedure(p) if p.not_done => return Err(stu3("Procedure.notDone")),
        Resource::FamilyMemberHistory(f) if f.not_done => {
            return Err(stu3("FamilyMemberHistory.notDone"))
        }
        _ => {}
    }
    if !matches!(resource, Resource::Patient(_)) && resource.subject().is_none() {
        let field = match resource {
            Resource::FamilyMemberHistory(_) => "patient",
            Resource::Coverage(_) => "beneficiary",
            _ => "subject",
        };
        return Err(missing(&format!("{}.{field}", resource.type_name())));
    }
    Ok(())
}

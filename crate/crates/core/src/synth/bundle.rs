use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{manifest, SyntheticPatient};
use crate::fhir::resources::{
    Address, Bundle, CodeableConcept, Coding, Condition, Coverage, Extension, FamilyMemberCondition,
    FamilyMemberHistory, HumanName, MedicationRequest, Observation, Patient, Procedure, Quantity, Reference, Resource,
};
use crate::fhir::{parse_bundle, to_patient_record, FhirError, ACT_CODE, UCUM, US_CORE_ETHNICITY, US_CORE_RACE};
use crate::record::{ClinicalEvent, Domain, Ethnicity, Insurance, PatientRecord, Race, Sex};

const OMB: &str = "urn:oid:2.16.840.1.113883.6.238";
pub const MANIFEST_FILE: &str = "manifest.psv";

fn omb_extension(url: &str, code: &str) -> Extension {
    Extension {
        url: url.to_string(),
        extension: vec![Extension {
            url: "ombCategory".into(),
            extension: Vec::new(),
            value_coding: Some(Coding {
                system: Some(OMB.into()),
                code: Some(code.into()),
                display: None,
            }),
            value_string: None,
        }],
        value_coding: None,
        value_string: None,
    }
}

fn concept(ev: &ClinicalEvent) -> CodeableConcept {
    CodeableConcept {
        coding: vec![Coding {
            system: Some(ev.code_system.uri().to_string()),
            code: Some(ev.code.clone()),
            display: None,
        }],
        text: None,
    }
}

fn patient_resource(r: &PatientRecord) -> Patient {
    let mut extension = Vec::new();
    let race = match r.race {
        Race::Asian => Some("2028-9"),
        Race::Black => Some("2054-5"),
        Race::White => Some("2106-3"),
        Race::Other => Some("2131-1"),
        Race::Unknown => None,
    };
    if let Some(code) = race {
        extension.push(omb_extension(US_CORE_RACE, code));
    }
    let ethnicity = match r.ethnicity {
        Ethnicity::Hispanic => Some("2135-2"),
        Ethnicity::NonHispanic => Some("2186-5"),
        Ethnicity::Unknown => None,
    };
    if let Some(code) = ethnicity {
        extension.push(omb_extension(US_CORE_ETHNICITY, code));
    }
    Patient {
        id: Some(r.patient_id.clone()),
        extension,
        name: r
            .name
            .iter()
            .map(|n| HumanName {
                text: Some(n.clone()),
                ..HumanName::default()
            })
            .collect(),
        gender: Some(
            match r.sex {
                Sex::Female => "female",
                Sex::Male => "male",
                Sex::Unknown => "unknown",
            }
            .into(),
        ),
        birth_date: Some(r.birth_date.format("%Y-%m-%d").to_string()),
        address: r
            .region
            .iter()
            .map(|p| Address {
                postal_code: Some(format!("{p}01")),
                state: None,
            })
            .collect(),
        managing_organization: r.site.as_ref().map(|s| Reference::to(format!("Organization/{s}"))),
    }
}

/// R4 collection bundle for one record. Measurement events without a value
/// have no Observation form and are not emitted.
pub fn to_fhir_bundle(r: &PatientRecord) -> Bundle {
    let mut bundle = Bundle::new("collection");
    bundle.id = Some(r.patient_id.clone());
    bundle.timestamp = r.extraction_date.map(|d| format!("{}T00:00:00Z", d.format("%Y-%m-%d")));
    bundle.push(Resource::Patient(patient_resource(r)));
    let subject = || Some(Reference::to(format!("Patient/{}", r.patient_id)));

    if let Some(code) = match r.insurance {
        Insurance::Public => Some("PUBLICPOL"),
        Insurance::Private => Some("HIP"),
        Insurance::Unknown => None,
    } {
        bundle.push(Resource::Coverage(Coverage {
            id: Some(format!("{}-cov", r.patient_id)),
            status: Some("active".into()),
            kind: Some(CodeableConcept {
                coding: vec![Coding {
                    system: Some(ACT_CODE.into()),
                    code: Some(code.into()),
                    display: None,
                }],
                text: None,
            }),
            beneficiary: subject(),
        }));
    }

    for (i, ev) in r.events.iter().enumerate() {
        let id = Some(format!("{}-{}", r.patient_id, i + 1));
        let date = Some(r.date_at(ev.age_days).format("%Y-%m-%d").to_string());
        let resource = match ev.domain {
            Domain::Measurement => {
                let Some(value) = ev.value else { continue };
                Resource::Observation(Observation {
                    id,
                    status: Some("final".into()),
                    code: concept(ev),
                    subject: subject(),
                    effective_date_time: date,
                    issued: None,
                    value_quantity: Some(Quantity {
                        value: Some(value),
                        unit: ev.unit.clone(),
                        system: ev.unit.as_ref().map(|_| UCUM.to_string()),
                        code: ev.unit.clone(),
                    }),
                })
            }
            Domain::Condition => Resource::Condition(Condition {
                id,
                code: concept(ev),
                subject: subject(),
                onset_date_time: date,
                ..Condition::default()
            }),
            Domain::Medication => Resource::MedicationRequest(MedicationRequest {
                id,
                status: Some("active".into()),
                intent: Some("order".into()),
                medication_codeable_concept: Some(concept(ev)),
                subject: subject(),
                authored_on: date,
            }),
            Domain::Procedure => Resource::Procedure(Procedure {
                id,
                status: Some("completed".into()),
                code: concept(ev),
                subject: subject(),
                performed_date_time: date,
                ..Procedure::default()
            }),
            Domain::FamilyHistory => Resource::FamilyMemberHistory(FamilyMemberHistory {
                id,
                status: Some("completed".into()),
                patient: subject(),
                date,
                condition: vec![FamilyMemberCondition { code: concept(ev) }],
                ..FamilyMemberHistory::default()
            }),
        };
        bundle.push(resource);
    }
    bundle
}

pub fn to_fhir_bundles(cohort: &[PatientRecord]) -> Vec<Bundle> {
    cohort.iter().map(to_fhir_bundle).collect()
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Fhir { path: PathBuf, source: FhirError },
    #[error("{path}: malformed manifest row {row}")]
    Manifest { path: PathBuf, row: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CohortError + '_ {
    move |e| CohortError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write the manifest plus one bundle file per child into `dir`.
pub fn write_cohort(dir: &Path, patients: &[SyntheticPatient]) -> Result<(), CohortError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for p in patients {
        let path = dir.join(format!("{}.json", p.record.patient_id));
        let json = serde_json::to_vec_pretty(&to_fhir_bundle(&p.record)).expect("bundle serializes");
        fs::write(&path, json).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest(patients)).map_err(io_err(&path))
}

/// Read every bundle listed in `dir`'s manifest, in manifest order.
pub fn read_cohort(dir: &Path) -> Result<Vec<PatientRecord>, CohortError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (row, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let file = line.split('|').nth(1).filter(|f| !f.is_empty()).ok_or_else(|| CohortError::Manifest {
            path: path.clone(),
            row: row + 1,
        })?;
        let bundle_path = dir.join(file);
        let raw = fs::read(&bundle_path).map_err(io_err(&bundle_path))?;
        let record = parse_bundle(&raw)
            .and_then(|set| to_patient_record(&set))
            .map_err(|source| CohortError::Fhir {
                path: bundle_path.clone(),
                source,
            })?;
        out.push(record);
    }
    Ok(out)
}

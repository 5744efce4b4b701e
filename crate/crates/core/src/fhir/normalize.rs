use chrono::NaiveDate;

use super::resources::{CodeableConcept, Coding, Extension, Patient};
use super::{FhirError, FhirResourceSet, ACT_CODE, SOPT, US_CORE_ETHNICITY, US_CORE_RACE};
use crate::record::{
    ClinicalEvent, CodeSystem, Domain, Ethnicity, Insurance, PatientRecord, Race, Sex,
};

/// Calendar date of a FHIR `date`/`dateTime`, taken as written (no zone shift).
///
/// Partial dates (`2018`, `2018-04`) are not usable clinical dates.
pub fn parse_fhir_date(s: &str) -> Option<NaiveDate> {
    let day = s.get(..10)?;
    if s.len() > 10 && !s[10..].starts_with('T') {
        return None;
    }
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

fn first_date<'a>(candidates: impl IntoIterator<Item = Option<&'a str>>) -> Option<NaiveDate> {
    candidates.into_iter().flatten().find_map(parse_fhir_date)
}

/// Pick the coding to keep: the first with a recognized system, else the first coded one.
fn pick_code(concept: &CodeableConcept) -> Option<(CodeSystem, String)> {
    let coded = || concept.coding.iter().filter(|c| c.code.as_deref().is_some_and(|s| !s.is_empty()));
    coded()
        .find_map(|c| {
            let system = CodeSystem::from_uri(c.system.as_deref()?)?;
            Some((system, c.code.clone()?))
        })
        .or_else(|| coded().next().map(|c| (CodeSystem::Local, c.code.clone().unwrap_or_default())))
}

fn omb_category(patient: &Patient, url: &str) -> Vec<String> {
    patient
        .extension
        .iter()
        .filter(|e| e.url == url)
        .flat_map(|e: &Extension| e.extension.iter())
        .filter(|e| e.url == "ombCategory")
        .filter_map(|e| e.value_coding.as_ref()?.code.clone())
        .collect()
}

fn race_of(patient: &Patient) -> Race {
    let codes = omb_category(patient, US_CORE_RACE);
    let mapped: Vec<Race> = codes
        .iter()
        .map(|c| match c.as_str() {
            "2028-9" => Race::Asian,
            "2054-5" => Race::Black,
            "2106-3" => Race::White,
            _ => Race::Other,
        })
        .collect();
    match mapped.as_slice() {
        [] => Race::Unknown,
        [one] => *one,
        [first, rest @ ..] if rest.iter().all(|r| r == first) => *first,
        _ => Race::Other,
    }
}

fn ethnicity_of(patient: &Patient) -> Ethnicity {
    let codes = omb_category(patient, US_CORE_ETHNICITY);
    match codes.first().map(String::as_str) {
        Some("2135-2") => Ethnicity::Hispanic,
        Some("2186-5") => Ethnicity::NonHispanic,
        _ => Ethnicity::Unknown,
    }
}

const PUBLIC_ACT_CODES: &[&str] = &[
    "PUBLICPOL", "DENTPRG", "DISEASEPRG", "CANPRG", "ENDRENAL", "HIVAIDS", "MANDPOL", "MENTPRG",
    "SAFNET", "SUBPRG", "SUBSIDIZ", "SUBSIDMC", "SUBSUPP", "WCBPOL",
];
const PRIVATE_ACT_CODES: &[&str] = &[
    "EHCPOL", "HSAPOL", "AUTOPOL", "DENTAL", "DISEASE", "DRUGPOL", "HIP", "LTC", "MCPOL", "POS",
    "HMO", "PPO", "MENTPOL", "SUBPOL", "VISPOL",
];

fn payer_of(coding: &Coding) -> Option<Insurance> {
    let code = coding.code.as_deref()?;
    match coding.system.as_deref()? {
        ACT_CODE if PUBLIC_ACT_CODES.contains(&code) => Some(Insurance::Public),
        ACT_CODE if PRIVATE_ACT_CODES.contains(&code) => Some(Insurance::Private),
        SOPT => match code.chars().next()? {
            '1'..='4' => Some(Insurance::Public),
            '5' | '6' => Some(Insurance::Private),
            _ => None,
        },
        _ => None,
    }
}

/// Normalize a validated resource set into the canonical record.
pub fn to_patient_record(set: &FhirResourceSet) -> Result<PatientRecord, FhirError> {
    let patient = &set.patient;
    let birth_date = patient
        .birth_date
        .as_deref()
        .and_then(parse_fhir_date)
        .ok_or_else(|| FhirError::SchemaViolation("Patient.birthDate is required".into()))?;
    let sex = match patient.gender.as_deref() {
        Some("female") => Sex::Female,
        Some("male") => Sex::Male,
        _ => Sex::Unknown,
    };
    let mut record = PatientRecord::new(set.patient_id(), birth_date, sex);
    record.name = patient.name.iter().find_map(|n| n.display());
    record.race = race_of(patient);
    record.ethnicity = ethnicity_of(patient);
    record.insurance = set
        .coverages
        .iter()
        .filter_map(|c| c.kind.as_ref())
        .flat_map(|k| k.coding.iter())
        .find_map(payer_of)
        .unwrap_or(Insurance::Unknown);
    record.region = patient
        .address
        .iter()
        .filter_map(|a| a.postal_code.as_deref())
        .find(|p| p.len() >= 3 && p.is_char_boundary(3))
        .map(|p| p[..3].to_ascii_uppercase());
    record.site = patient
        .managing_organization
        .as_ref()
        .and_then(|o| o.reference.as_deref())
        .map(|r| r.rsplit('/').next().unwrap_or(r).to_string());
    record.extraction_date = set.timestamp.as_deref().and_then(parse_fhir_date);

    let mut push = |name: String,
                    date: Option<NaiveDate>,
                    domain: Domain,
                    concept: &CodeableConcept,
                    quantity: Option<(f64, Option<String>)>|
     -> Result<(), FhirError> {
        let Some((code_system, code)) = pick_code(concept) else {
            log::debug!("{name}: no usable coding, skipped");
            return Ok(());
        };
        let date = date.ok_or_else(|| FhirError::MissingDate(name.clone()))?;
        let age_days = (date - birth_date).num_days();
        if age_days < 0 {
            return Err(FhirError::NegativeAge {
                resource: name,
                age_days,
            });
        }
        if record.extraction_date.is_some_and(|x| date > x) {
            return Err(FhirError::FutureEvent { resource: name });
        }
        let (value, unit) = match quantity {
            Some((v, u)) => (Some(v), u),
            None => (None, None),
        };
        record.events.push(ClinicalEvent {
            age_days,
            domain,
            code_system,
            code,
            value,
            unit,
        });
        Ok(())
    };

    for obs in &set.observations {
        let name = label("Observation", obs.id.as_deref());
        let Some(q) = obs.value_quantity.as_ref() else {
            log::debug!("{name}: no valueQuantity, skipped");
            continue;
        };
        let Some(value) = q.value.filter(|v| v.is_finite()) else {
            log::debug!("{name}: valueQuantity without value, skipped");
            continue;
        };
        let unit = q.code.clone().or_else(|| q.unit.clone());
        let date = first_date([obs.effective_date_time.as_deref(), obs.issued.as_deref()]);
        push(name, date, Domain::Measurement, &obs.code, Some((value, unit)))?;
    }
    for cond in &set.conditions {
        let date = first_date([cond.onset_date_time.as_deref(), cond.recorded_date.as_deref()]);
        push(label("Condition", cond.id.as_deref()), date, Domain::Condition, &cond.code, None)?;
    }
    for med in &set.medication_requests {
        let name = label("MedicationRequest", med.id.as_deref());
        let Some(concept) = med.medication_codeable_concept.as_ref() else {
            log::debug!("{name}: medicationReference is not resolved, skipped");
            continue;
        };
        let date = first_date([med.authored_on.as_deref()]);
        push(name, date, Domain::Medication, concept, None)?;
    }
    for proc in &set.procedures {
        let date = first_date([
            proc.performed_date_time.as_deref(),
            proc.performed_period.as_ref().and_then(|p| p.start.as_deref()),
        ]);
        push(label("Procedure", proc.id.as_deref()), date, Domain::Procedure, &proc.code, None)?;
    }
    for fmh in &set.family_histories {
        let name = label("FamilyMemberHistory", fmh.id.as_deref());
        let date = first_date([fmh.date.as_deref()]);
        for cond in &fmh.condition {
            push(name.clone(), date, Domain::FamilyHistory, &cond.code, None)?;
        }
    }

    record.sort_events();
    Ok(record)
}

fn label(kind: &str, id: Option<&str>) -> String {
    match id {
        Some(id) => format!("{kind}/{id}"),
        None => kind.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::parse_bundle;

    fn bundle_with(entries: &str) -> Vec<u8> {
        format!(
            r#"{{"resourceType":"Bundle","type":"collection","entry":[
            {{"resource":{{"resourceType":"Patient","id":"p1","gender":"male","birthDate":"2018-01-01"}}}}{entries}]}}"#
        )
        .into_bytes()
    }

    #[test]
    fn observation_thirty_days_after_birth() {
        let raw = bundle_with(
            r#",{"resource":{"resourceType":"Observation","id":"o1",
            "code":{"coding":[{"system":"http://loinc.org","code":"29463-7"}]},
            "subject":{"reference":"Patient/p1"},"effectiveDateTime":"2018-01-31",
            "valueQuantity":{"value":4.5,"unit":"kg"}}}"#,
        );
        let rec = to_patient_record(&parse_bundle(&raw).unwrap()).unwrap();
        assert_eq!(rec.events.len(), 1);
        let ev = &rec.events[0];
        assert_eq!(ev.age_days, 30);
        assert_eq!(ev.domain, Domain::Measurement);
        assert_eq!(ev.value, Some(4.5));
        assert_eq!(ev.unit.as_deref(), Some("kg"));
    }

    #[test]
    fn no_clinical_entries_gives_empty_events() {
        let rec = to_patient_record(&parse_bundle(&bundle_with("")).unwrap()).unwrap();
        assert!(rec.events.is_empty());
        assert_eq!(rec.sex, Sex::Male);
    }

    #[test]
    fn condition_before_birth_is_negative_age() {
        let raw = bundle_with(
            r#",{"resource":{"resourceType":"Condition","id":"c1",
            "code":{"coding":[{"system":"http://snomed.info/sct","code":"195967001"}]},
            "subject":{"reference":"Patient/p1"},"onsetDateTime":"2017-12-01"}}"#,
        );
        let err = to_patient_record(&parse_bundle(&raw).unwrap()).unwrap_err();
        assert!(matches!(err, FhirError::NegativeAge { age_days: -31, .. }));
    }

    #[test]
    fn condition_falls_back_to_recorded_date() {
        let raw = bundle_with(
            r#",{"resource":{"resourceType":"Condition","id":"c1",
            "code":{"coding":[{"system":"http://snomed.info/sct","code":"195967001"}]},
            "subject":{"reference":"Patient/p1"},"recordedDate":"2018-01-11"}}"#,
        );
        let rec = to_patient_record(&parse_bundle(&raw).unwrap()).unwrap();
        assert_eq!(rec.events[0].age_days, 10);
    }

    #[test]
    fn undated_medication_is_missing_date() {
        let raw = bundle_with(
            r#",{"resource":{"resourceType":"MedicationRequest","id":"m1",
            "medicationCodeableConcept":{"coding":[{"system":"http://www.nlm.nih.gov/research/umls/rxnorm","code":"723"}]},
            "subject":{"reference":"Patient/p1"}}}"#,
        );
        let err = to_patient_record(&parse_bundle(&raw).unwrap()).unwrap_err();
        assert_eq!(err, FhirError::MissingDate("MedicationRequest/m1".into()));
    }

    #[test]
    fn procedure_period_start_and_family_history() {
        let raw = bundle_with(
            r#",{"resource":{"resourceType":"Procedure","id":"x1",
            "code":{"coding":[{"system":"http://www.ama-assn.org/go/cpt","code":"99392"}]},
            "subject":{"reference":"Patient/p1"},"performedPeriod":{"start":"2019-01-01T08:00:00Z"}}},
            {"resource":{"resourceType":"FamilyMemberHistory","id":"f1","patient":{"reference":"Patient/p1"},
            "date":"2018-01-02","condition":[{"code":{"coding":[{"system":"http://snomed.info/sct","code":"44054006"}]}},
            {"code":{"coding":[{"system":"http://snomed.info/sct","code":"414916001"}]}}]}}"#,
        );
        let rec = to_patient_record(&parse_bundle(&raw).unwrap()).unwrap();
        let fh: Vec<_> = rec
            .events
            .iter()
            .filter(|e| e.domain == Domain::FamilyHistory)
            .collect();
        assert_eq!(fh.len(), 2);
        assert!(fh.iter().all(|e| e.age_days == 1));
        let proc = rec.events.iter().find(|e| e.domain == Domain::Procedure).unwrap();
        assert_eq!(proc.code_system, CodeSystem::Cpt);
        assert_eq!(proc.age_days, 365);
    }

    #[test]
    fn demographics_from_extensions_and_coverage() {
        let raw = br#"{"resourceType":"Bundle","type":"collection","entry":[
          {"resource":{"resourceType":"Patient","id":"p1","gender":"other","birthDate":"2018-01-01",
            "extension":[
              {"url":"http://hl7.org/fhir/us/core/StructureDefinition/us-core-race",
               "extension":[{"url":"ombCategory","valueCoding":{"system":"urn:oid:2.16.840.1.113883.6.238","code":"2054-5"}}]},
              {"url":"http://hl7.org/fhir/us/core/StructureDefinition/us-core-ethnicity",
               "extension":[{"url":"ombCategory","valueCoding":{"code":"2135-2"}}]}],
            "address":[{"postalCode":"19803-1234"}],
            "managingOrganization":{"reference":"Organization/site-a"}}},
          {"resource":{"resourceType":"Coverage","id":"cov","beneficiary":{"reference":"Patient/p1"},
            "type":{"coding":[{"system":"http://terminology.hl7.org/CodeSystem/v3-ActCode","code":"PUBLICPOL"}]}}}]}"#;
        let rec = to_patient_record(&parse_bundle(raw).unwrap()).unwrap();
        assert_eq!(rec.sex, Sex::Unknown);
        assert_eq!(rec.race, Race::Black);
        assert_eq!(rec.ethnicity, Ethnicity::Hispanic);
        assert_eq!(rec.insurance, Insurance::Public);
        assert_eq!(rec.region.as_deref(), Some("198"));
        assert_eq!(rec.site.as_deref(), Some("site-a"));
    }

    #[test]
    fn event_after_extraction_is_rejected() {
        let raw = br#"{"resourceType":"Bundle","type":"collection","timestamp":"2019-01-01T00:00:00Z","entry":[
          {"resource":{"resourceType":"Patient","id":"p1","birthDate":"2018-01-01"}},
          {"resource":{"resourceType":"Condition","id":"c1",
            "code":{"coding":[{"system":"http://snomed.info/sct","code":"195967001"}]},
            "subject":{"reference":"Patient/p1"},"onsetDateTime":"2019-06-01"}}]}"#;
        assert!(matches!(
            to_patient_record(&parse_bundle(raw).unwrap()),
            Err(FhirError::FutureEvent { .. })
        ));
    }

    #[test]
    fn partial_dates_are_unusable() {
        assert_eq!(parse_fhir_date("2018-04"), None);
        assert_eq!(parse_fhir_date("2018"), None);
        assert_eq!(
            parse_fhir_date("2018-04-02T10:00:00+02:00"),
            NaiveDate::from_ymd_opt(2018, 4, 2)
        );
        assert_eq!(parse_fhir_date("2018-04-02junk"), None);
    }
}

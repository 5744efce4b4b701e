//! Pulls one patient's chart from a FHIR R4 server: the Patient read plus a
//! `patient=` search per consumed resource type, following `next` links.

use std::collections::HashSet;
use std::time::Duration;

use reqwest::{StatusCode, Url};
use serde_json::{json, Value};
use thiserror::Error;

use pedrisk_core::fhir::{parse_page, FhirError, FhirResourceSet, Resource, Source};

/// Resource types searched besides the Patient itself.
pub const SEARCH_TYPES: [&str; 6] = [
    "Observation",
    "Condition",
    "MedicationRequest",
    "Procedure",
    "FamilyMemberHistory",
    "Coverage",
];

const PAGE_SIZE: usize = 200;
/// Hard stop for servers that keep minting fresh `next` URLs.
const MAX_PAGES: usize = 10_000;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("patient {0} not found")]
    NotFound(String),
    #[error("upstream refused access ({0})")]
    Unauthorized(u16),
    #[error("pagination loop at {0}")]
    PaginationLoop(String),
    #[error("upstream returned HTTP {status} for {url}")]
    Upstream { status: u16, url: String },
    #[error("upstream page: {0}")]
    BadPage(FhirError),
    #[error(transparent)]
    Fhir(FhirError),
}

#[derive(Debug, Clone)]
pub struct FhirClient {
    http: reqwest::Client,
}

impl FhirClient {
    pub fn new(timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        Self { http }
    }

    pub async fn fetch_patient_everything(
        &self,
        base: &str,
        patient_id: &str,
        token: Option<&str>,
    ) -> Result<FhirResourceSet, FetchError> {
        if patient_id.is_empty() || patient_id.contains(['/', '?', '#']) {
            return Err(FetchError::InvalidRequest(format!("bad patient id `{patient_id}`")));
        }
        let base = base_url(base)?;
        let patient_url = base
            .join(&format!("Patient/{patient_id}"))
            .map_err(|e| FetchError::InvalidRequest(e.to_string()))?;
        let patient: Value = match self.get(&patient_url, token).await? {
            (StatusCode::NOT_FOUND | StatusCode::GONE, _) => return Err(FetchError::NotFound(patient_id.into())),
            (_, body) => serde_json::from_slice(&body)
                .map_err(|e| FetchError::BadPage(FhirError::MalformedDocument(e.to_string())))?,
        };
        let wrapped = json!({
            "resourceType": "Bundle",
            "type": "collection",
            "entry": [{"fullUrl": patient_url.as_str(), "resource": patient}],
        });
        let first = parse_page(wrapped.to_string().as_bytes()).map_err(FetchError::BadPage)?;
        let mut entries = first.entries;
        let mut warnings = first.warnings;

        for kind in SEARCH_TYPES {
            let mut url = base
                .join(kind)
                .map_err(|e| FetchError::InvalidRequest(e.to_string()))?;
            url.query_pairs_mut()
                .append_pair("patient", patient_id)
                .append_pair("_count", &PAGE_SIZE.to_string());
            let mut seen = HashSet::new();
            let mut next = Some(url);
            while let Some(url) = next.take() {
                if !seen.insert(url.to_string()) || seen.len() > MAX_PAGES {
                    return Err(FetchError::PaginationLoop(url.to_string()));
                }
                let (status, body) = self.get(&url, token).await?;
                if status == StatusCode::NOT_FOUND {
                    return Err(FetchError::Upstream { status: 404, url: url.to_string() });
                }
                let page = parse_page(&body).map_err(FetchError::BadPage)?;
                warnings += page.warnings;
                // `_include`d Patients would duplicate the one read above.
                entries.extend(page.entries.into_iter().filter(|(_, r)| !matches!(r, Resource::Patient(_))));
                if let Some(link) = page.next {
                    next = Some(url.join(&link).map_err(|_| FetchError::BadPage(FhirError::SchemaViolation(format!("bad next link `{link}`"))))?);
                }
            }
        }
        FhirResourceSet::assemble(entries, Source::Fetched, None, warnings).map_err(FetchError::Fhir)
    }

    /// GET returning the status and body; 401/403 and other non-success
    /// statuses apart from 404/410 become errors.
    async fn get(&self, url: &Url, token: Option<&str>) -> Result<(StatusCode, Vec<u8>), FetchError> {
        let mut req = self.http.get(url.clone()).header("Accept", "application/fhir+json");
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status();
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => return Err(FetchError::Unauthorized(status.as_u16())),
            StatusCode::NOT_FOUND | StatusCode::GONE => {}
            s if !s.is_success() => {
                return Err(FetchError::Upstream {
                    status: s.as_u16(),
                    url: url.to_string(),
                })
            }
            _ => {}
        }
        let body = resp.bytes().await.map_err(|e| FetchError::Transport(e.to_string()))?;
        Ok((status, body.to_vec()))
    }
}

/// Parse the base URL, making sure relative joins append to its path.
fn base_url(base: &str) -> Result<Url, FetchError> {
    let mut url = Url::parse(base).map_err(|e| FetchError::InvalidRequest(format!("server `{base}`: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(FetchError::InvalidRequest(format!("server `{base}` is not http(s)")));
    }
    if !url.path().ends_with('/') {
        let path = format!("{}/", url.path());
        url.set_path(&path);
    }
    Ok(url)
}

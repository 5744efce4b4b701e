//! In-process FHIR server for tests and demos. It serves Patient reads and
//! paginated `patient=` searches from bundles loaded at startup.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::{json, Value};
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Default)]
struct MockPatient {
    patient: Value,
    by_type: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Clone)]
pub struct MockFhir {
    patients: HashMap<String, MockPatient>,
    page_size: usize,
    token: Option<String>,
    loop_type: Option<String>,
}

pub struct MockFhirServer {
    /// Base URL ending in `/fhir`.
    pub base_url: String,
    handle: JoinHandle<()>,
}

impl Drop for MockFhirServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

impl MockFhir {
    pub fn new(page_size: usize) -> Self {
        Self {
            patients: HashMap::new(),
            page_size: page_size.max(1),
            token: None,
            loop_type: None,
        }
    }

    /// Serve every resource of a single-patient bundle.
    pub fn with_bundle(mut self, bundle: &Value) -> Self {
        let mut p = MockPatient::default();
        for entry in bundle["entry"].as_array().into_iter().flatten() {
            let resource = &entry["resource"];
            match resource["resourceType"].as_str() {
                Some("Patient") => p.patient = resource.clone(),
                Some(kind) => p.by_type.entry(kind.to_string()).or_default().push(resource.clone()),
                None => {}
            }
        }
        let id = p.patient["id"].as_str().unwrap_or_default().to_string();
        self.patients.insert(id, p);
        self
    }

    /// Require `Authorization: Bearer <token>`.
    pub fn with_token(mut self, token: &str) -> Self {
        self.token = Some(token.to_string());
        self
    }

    /// Make the second page of `resource_type` searches link back to the first.
    pub fn with_pagination_loop(mut self, resource_type: &str) -> Self {
        self.loop_type = Some(resource_type.to_string());
        self
    }

    pub async fn spawn(self) -> std::io::Result<MockFhirServer> {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let base_url = format!("http://{}/fhir", listener.local_addr()?);
        let shared = Arc::new((self, base_url.clone()));
        let app = Router::new()
            .route("/fhir/Patient/{id}", get(read_patient))
            .route("/fhir/{kind}", get(search))
            .with_state(shared);
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(MockFhirServer { base_url, handle })
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(token) = &self.token else { return true };
        headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == format!("Bearer {token}"))
    }
}

type Shared = Arc<(MockFhir, String)>;

fn fhir_json(status: StatusCode, body: &Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/fhir+json")], body.to_string()).into_response()
}

fn outcome(status: StatusCode, text: &str) -> Response {
    let body = json!({
        "resourceType": "OperationOutcome",
        "issue": [{"severity": "error", "code": "processing", "diagnostics": text}],
    });
    fhir_json(status, &body)
}

async fn read_patient(State(shared): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> Response {
    let (mock, _) = &*shared;
    if !mock.authorized(&headers) {
        return outcome(StatusCode::UNAUTHORIZED, "token required");
    }
    match mock.patients.get(&id) {
        Some(p) => fhir_json(StatusCode::OK, &p.patient),
        None => outcome(StatusCode::NOT_FOUND, "unknown patient"),
    }
}

async fn search(
    State(shared): State<Shared>,
    Path(kind): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let (mock, base) = &*shared;
    if !mock.authorized(&headers) {
        return outcome(StatusCode::UNAUTHORIZED, "token required");
    }
    let Some(pid) = q.get("patient") else {
        return outcome(StatusCode::BAD_REQUEST, "patient parameter required");
    };
    let page: usize = q.get("_page").and_then(|p| p.parse().ok()).unwrap_or(1).max(1);
    let all = mock
        .patients
        .get(pid)
        .and_then(|p| p.by_type.get(&kind))
        .map(Vec::as_slice)
        .unwrap_or_default();
    let pages = all.len().div_ceil(mock.page_size).max(1);
    let start = ((page - 1) * mock.page_size).min(all.len());
    let end = (start + mock.page_size).min(all.len());
    let page_url = |n: usize| format!("{base}/{kind}?patient={pid}&_page={n}");
    let mut links = vec![json!({"relation": "self", "url": page_url(page)})];
    if mock.loop_type.as_deref() == Some(kind.as_str()) && page == 2 {
        links.push(json!({"relation": "next", "url": page_url(1)}));
    } else if page < pages {
        links.push(json!({"relation": "next", "url": page_url(page + 1)}));
    }
    let entries: Vec<Value> = all[start..end]
        .iter()
        .map(|r| {
            json!({
                "fullUrl": format!("{base}/{kind}/{}", r["id"].as_str().unwrap_or_default()),
                "resource": r,
                "search": {"mode": "match"},
            })
        })
        .collect();
    let bundle = json!({
        "resourceType": "Bundle",
        "type": "searchset",
        "total": all.len(),
        "link": links,
        "entry": entries,
    });
    fhir_json(StatusCode::OK, &bundle)
}

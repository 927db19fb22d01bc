//! JSON HTTP API over a [`Service`], used by the review UI.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | GET | `/assignments` | |
//! | POST | `/assignments` | assignment document, optional `version` |
//! | GET | `/assignments/{id}` | |
//! | GET | `/assignments/{id}/items` | |
//! | POST | `/items/{id}/approve` | `{chosen_text \| candidate, instruction?, version, revise?}` |
//! | POST | `/items/{id}/instruction` | `{instruction, version}` |
//! | GET | `/runs` | |
//! | POST | `/runs` | `{assignment_id?, backend, shots?: {method, k, seed}, wait?}` |
//! | GET | `/runs/{id}` | |
//! | GET | `/runs/{id}/reports` | |
//! | GET | `/runs/{id}/relevance` | |
//! | GET | `/labels/disagreements` | `?assignment=` |
//! | POST | `/disagreements/{id}/resolve` | `{label, version, resolver?, assignment_id?}` |
//! | POST | `/cells/{id}/relevance` | `{flag, version, annotator?}` |
//!
//! Item ids are `{assignment_id}:{item_id}` (the bare item id works when it is
//! unambiguous); cell ids are `{run_id}:{response_id}:{item_id}`. Errors come
//! back as `{"error": message}` with 404, 409 (stale version or unmet
//! precondition) or 422 (invalid input).

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use percent_encoding::percent_decode_str;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::grading::Relevance;
use crate::model::{Assignment, Grade};
use crate::rrag::Choice;
use crate::service::{Service, ServiceError, ShotConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        ApiResponse { status: 200, body }
    }

    fn with_status(status: u16, body: Value) -> Self {
        ApiResponse { status, body }
    }

    fn error(e: &ServiceError) -> Self {
        ApiResponse {
            status: e.http_status(),
            body: json!({ "error": e.to_string() }),
        }
    }
}

type Handled = Result<ApiResponse, ServiceError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    let de = &mut serde_json::Deserializer::from_slice(if body.is_empty() { b"{}" } else { body });
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ServiceError::Validation(format!("invalid request body at `{path}`: {}", e.into_inner()))
    })
}

fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("response serializes")
}

fn decode(segment: &str) -> String {
    percent_decode_str(segment).decode_utf8_lossy().into_owned()
}

fn require_version(version: Option<u64>) -> Result<u64, ServiceError> {
    version.ok_or_else(|| ServiceError::Validation("`version` is required".into()))
}

#[derive(Deserialize)]
struct ApproveBody {
    #[serde(default)]
    chosen_text: Option<String>,
    #[serde(default)]
    candidate: Option<usize>,
    #[serde(default)]
    instruction: Option<String>,
    version: Option<u64>,
    #[serde(default)]
    revise: bool,
}

#[derive(Deserialize)]
struct InstructionBody {
    instruction: Option<String>,
    version: Option<u64>,
}

#[derive(Deserialize)]
struct RunBody {
    #[serde(default)]
    assignment_id: Option<String>,
    #[serde(default = "default_backend")]
    backend: String,
    #[serde(default)]
    shots: Option<ShotConfig>,
    #[serde(default)]
    wait: bool,
}

fn default_backend() -> String {
    "oracle".into()
}

#[derive(Deserialize)]
struct ResolveBody {
    label: Grade,
    version: Option<u64>,
    #[serde(default)]
    resolver: Option<String>,
    #[serde(default)]
    assignment_id: Option<String>,
}

#[derive(Deserialize)]
struct RelevanceBody {
    flag: String,
    version: Option<u64>,
    #[serde(default)]
    annotator: Option<String>,
}

#[derive(Deserialize)]
struct AssignmentBody {
    #[serde(flatten)]
    assignment: Assignment,
    #[serde(default)]
    version: Option<u64>,
}

/// Splits `aid:item` (or a bare item id) into its assignment and item.
fn resolve_item(service: &Service, id: &str) -> Result<(String, String), ServiceError> {
    if let Some((aid, item)) = id.rsplit_once(':') {
        return Ok((aid.to_string(), item.to_string()));
    }
    let owners: Vec<String> = service
        .assignment_ids()?
        .into_iter()
        .filter(|aid| service.evaluation(aid).is_ok_and(|e| e.value.item(id).is_some()))
        .collect();
    match owners.as_slice() {
        [one] => Ok((one.clone(), id.to_string())),
        [] => Err(ServiceError::NotFound(format!("unknown item `{id}`"))),
        _ => Err(ServiceError::Validation(format!("item `{id}` is ambiguous; use `assignment_id:{id}`"))),
    }
}

fn run_body(service: &Service, run_id: &str) -> Handled {
    let run = service.run_view(run_id)?;
    let mut value = to_value(&run);
    value["progress"] = to_value(&run.progress());
    if let Value::Object(map) = &mut value {
        map.remove("template");
    }
    Ok(ApiResponse::ok(value))
}

fn route(service: &Arc<Service>, method: &str, segments: &[String], query: &[(String, String)], body: &[u8]) -> Handled {
    let seg: Vec<&str> = segments.iter().map(String::as_str).collect();
    let query_value = |name: &str| query.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    match (method, seg.as_slice()) {
        ("GET", ["health"]) => Ok(ApiResponse::ok(json!({"status": "ok"}))),
        ("GET", ["assignments"]) => {
            let mut out = Vec::new();
            for id in service.assignment_ids()? {
                let a = service.assignment(&id)?;
                let items = service.evaluation(&id).ok().map(|e| {
                    let total = e.value.items.len();
                    let pending = e.value.pending().len();
                    json!({"total": total, "approved": total - pending})
                });
                out.push(json!({"id": a.id, "problem_text": a.problem_text, "max_score": a.max_score(), "items": items}));
            }
            Ok(ApiResponse::ok(Value::Array(out)))
        }
        ("POST", ["assignments"]) => {
            let body: AssignmentBody = parse_body(body)?;
            let version = service.put_assignment(&body.assignment, Some(body.version.unwrap_or(0)))?;
            Ok(ApiResponse::with_status(201, json!({"id": body.assignment.id, "version": version})))
        }
        ("GET", ["assignments", id]) => {
            let a = service.assignment(id)?;
            let mut value = to_value(&a);
            value["version"] = json!(service.ws.version(&crate::workspace::assignment_key(id))?);
            value["max_score"] = to_value(&a.max_score());
            Ok(ApiResponse::ok(value))
        }
        ("GET", ["assignments", id, "items"]) => {
            service.assignment(id)?;
            let evaluation = service.evaluation(id)?;
            let items: Vec<Value> = evaluation
                .value
                .items
                .iter()
                .map(|item| {
                    let mut v = to_value(item);
                    v["id"] = json!(format!("{id}:{}", item.item_id));
                    v
                })
                .collect();
            Ok(ApiResponse::ok(json!({"assignment_id": id, "items": items})))
        }
        ("POST", ["items", id, "approve"]) => {
            let (aid, item_id) = resolve_item(service, id)?;
            let body: ApproveBody = parse_body(body)?;
            let version = require_version(body.version)?;
            let current = service.evaluation(&aid)?;
            let item = current.value.item(&item_id).ok_or_else(|| ServiceError::NotFound(format!("unknown item `{id}`")))?;
            let choice = match (body.candidate, body.chosen_text) {
                (Some(n), _) => Choice::Candidate(n),
                (None, Some(text)) => match item.candidates.iter().position(|c| *c == text) {
                    Some(i) => Choice::Candidate(i + 1),
                    None => Choice::Text(text),
                },
                (None, None) => return Err(ServiceError::Validation("give `chosen_text` or `candidate`".into())),
            };
            let item = service.approve(&aid, &item_id, choice, body.instruction, body.revise, Some(version))?;
            let mut value = to_value(&item);
            value["id"] = json!(format!("{aid}:{item_id}"));
            Ok(ApiResponse::ok(value))
        }
        ("POST", ["items", id, "instruction"]) => {
            let (aid, item_id) = resolve_item(service, id)?;
            let body: InstructionBody = parse_body(body)?;
            let item = service.instruct(&aid, &item_id, body.instruction, Some(require_version(body.version)?))?;
            Ok(ApiResponse::ok(to_value(&item)))
        }
        ("GET", ["runs"]) => Ok(ApiResponse::ok(to_value(&service.run_summaries()?))),
        ("POST", ["runs"]) => {
            let body: RunBody = parse_body(body)?;
            let aid = service.resolve_assignment(body.assignment_id.as_deref())?;
            let run = service.create_run(&aid, &body.backend, body.shots.as_ref())?;
            if body.wait {
                service.execute_run(&run.run_id, None)?;
                let mut response = run_body(service, &run.run_id)?;
                response.status = 201;
                Ok(response)
            } else {
                service.spawn_run(run.run_id.clone());
                Ok(ApiResponse::with_status(202, json!({"run_id": run.run_id, "status": run.status, "total": run.total_cells()})))
            }
        }
        ("GET", ["runs", id]) => run_body(service, id),
        ("GET", ["runs", id, "reports"]) => Ok(ApiResponse::ok(to_value(&service.reports(id)?))),
        ("GET", ["runs", id, "relevance"]) => {
            let report = service.relevance(id)?;
            Ok(ApiResponse::ok(json!({"annotated": report.annotated, "irrelevant": report.irrelevant, "rate": report.irrelevant_rate()})))
        }
        ("GET", ["labels", "disagreements"]) => {
            let aid = query_value("assignment");
            Ok(ApiResponse::ok(to_value(&service.disagreements(aid.as_deref())?)))
        }
        ("POST", ["disagreements", id, "resolve"]) => {
            let body: ResolveBody = parse_body(body)?;
            let version = require_version(body.version)?;
            let resolver = body.resolver.unwrap_or_else(|| "api".into());
            let view = service.resolve(body.assignment_id.as_deref(), id, body.label, &resolver, Some(version))?;
            Ok(ApiResponse::ok(to_value(&view)))
        }
        ("POST", ["cells", id, "relevance"]) => {
            let body: RelevanceBody = parse_body(body)?;
            let flag: Relevance = body.flag.parse()?;
            let version = require_version(body.version)?;
            let (run_id, rest) = id.split_once(':').ok_or_else(|| ServiceError::Validation(format!("cell id `{id}` is not run:response:item")))?;
            let (response_id, item_id) = rest.rsplit_once(':').ok_or_else(|| ServiceError::Validation(format!("cell id `{id}` is not run:response:item")))?;
            let annotator = body.annotator.unwrap_or_else(|| "api".into());
            let cell = service.annotate(run_id, response_id, item_id, flag, &annotator, Some(version))?;
            Ok(ApiResponse::ok(to_value(&cell)))
        }
        _ => Err(ServiceError::NotFound(format!("no route for {method} /{}", segments.join("/")))),
    }
}

/// Routes one request. `target` is the request path with optional query string.
pub fn handle(service: &Arc<Service>, method: &str, target: &str, body: &[u8]) -> ApiResponse {
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let segments: Vec<String> = path.split('/').filter(|s| !s.is_empty()).map(decode).collect();
    let query: Vec<(String, String)> = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    match route(service, method, &segments, &query, body) {
        Ok(response) => response,
        Err(e) => ApiResponse::error(&e),
    }
}

fn is_api_path(path: &str) -> bool {
    let first = path.trim_start_matches('/').split('/').next().unwrap_or("");
    matches!(first, "assignments" | "items" | "runs" | "labels" | "disagreements" | "cells" | "health")
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("svg") => "image/svg+xml",
        Some("json") => "application/json",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn static_file(root: &Path, path: &str) -> Option<(PathBuf, Vec<u8>)> {
    let relative = decode(path.trim_start_matches('/'));
    let relative = if relative.is_empty() { "index.html".to_string() } else { relative };
    let candidate = Path::new(&relative);
    if candidate.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(candidate);
    std::fs::read(&full).ok().map(|bytes| (full, bytes))
}

/// A running HTTP server; dropping the handle does not stop it, `stop` does.
pub struct ApiServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ApiServer {
    /// Binds `addr` (port 0 picks a free port) and serves on a background thread.
    pub fn start(service: Arc<Service>, addr: &str, static_dir: Option<PathBuf>) -> std::io::Result<ApiServer> {
        let server = Arc::new(tiny_http::Server::http(addr).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let accept = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for request in accept.incoming_requests() {
                let service = Arc::clone(&service);
                let static_dir = static_dir.clone();
                std::thread::spawn(move || serve_one(&service, static_dir.as_deref(), request));
            }
        });
        Ok(ApiServer {
            server,
            addr,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn header(name: &str, value: &str) -> tiny_http::Header {
    tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}

fn serve_one(service: &Arc<Service>, static_dir: Option<&Path>, mut request: tiny_http::Request) {
    let method = request.method().as_str().to_uppercase();
    let url = request.url().to_string();
    let mut body = Vec::new();
    if let Err(e) = request.as_reader().read_to_end(&mut body) {
        log::warn!("reading request body: {e}");
    }
    let path = url.split('?').next().unwrap_or("");
    if method == "GET" && !is_api_path(path) {
        if let Some((file, bytes)) = static_dir.and_then(|root| static_file(root, path)) {
            let response = tiny_http::Response::from_data(bytes).with_header(header("Content-Type", content_type(&file)));
            let _ = request.respond(response);
            return;
        }
    }
    if method == "OPTIONS" {
        let response = tiny_http::Response::empty(204)
            .with_header(header("Access-Control-Allow-Origin", "*"))
            .with_header(header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
            .with_header(header("Access-Control-Allow-Headers", "Content-Type"));
        let _ = request.respond(response);
        return;
    }
    let api = handle(service, &method, &url, &body);
    log::info!("{method} {url} -> {}", api.status);
    let response = tiny_http::Response::from_data(serde_json::to_vec(&api.body).expect("json body"))
        .with_status_code(api.status)
        .with_header(header("Content-Type", "application/json"))
        .with_header(header("Access-Control-Allow-Origin", "*"));
    let _ = request.respond(response);
}

//! The review UI's HTTP API, exercised over real sockets.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use qagrade::api::ApiServer;
use qagrade::config::Config;
use qagrade::fixture;
use qagrade::gateway::{oracle_grade, CompletionBackend, CompletionRecord, CompletionRequest, GatewayError};
use qagrade::service::Service;
use qagrade::workspace::Workspace;
use serde_json::{json, Value};

struct Api {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    service: Arc<Service>,
    server: Option<ApiServer>,
    client: reqwest::blocking::Client,
}

impl Api {
    /// Fixture ingested and questions generated; nothing approved.
    fn start() -> Api {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ws");
        let service = Service::new(Workspace::open(&root).unwrap(), Config::default());
        let assignment = fixture::assignment();
        let aid = assignment.id.clone();
        service.put_assignment(&assignment, Some(0)).unwrap();
        service.put_responses(&aid, &fixture::responses()).unwrap();
        service.put_labels(&aid, &fixture::labels()).unwrap();
        service.put_feedback(&aid, &fixture::feedback()).unwrap();
        service.put_rules(&aid, &fixture::rules()).unwrap();
        service.put_instruction(&aid, fixture::GENERAL_INSTRUCTION).unwrap();
        service.generate_questions(&aid, 3, &fixture::questions(), false).unwrap();
        let service = Arc::new(service);
        let server = ApiServer::start(Arc::clone(&service), "127.0.0.1:0", None).unwrap();
        Api {
            _dir: dir,
            root,
            service,
            server: Some(server),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn aid(&self) -> String {
        fixture::assignment().id
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.as_ref().unwrap().url())
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(path)).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    fn approve_all(&self) {
        let (_, items) = self.get(&format!("/assignments/{}/items", self.aid()));
        for item in items["items"].as_array().unwrap() {
            let body = json!({"chosen_text": item["candidates"][0], "version": item["version"]});
            let (status, _) = self.post(&format!("/items/{}/approve", item["id"].as_str().unwrap()), body);
            assert_eq!(status, 200);
        }
    }
}

impl Drop for Api {
    fn drop(&mut self) {
        if let Some(s) = self.server.take() {
            s.stop();
        }
    }
}

#[test]
fn assignments_and_items() {
    let api = Api::start();
    let (status, list) = api.get("/assignments");
    assert_eq!(status, 200);
    assert_eq!(list[0]["id"], api.aid().as_str());
    assert_eq!(list[0]["items"], json!({"total": 4, "approved": 0}));
    let (status, a) = api.get(&format!("/assignments/{}", api.aid()));
    assert_eq!(status, 200);
    assert_eq!(a["rubric"].as_array().unwrap().len(), 4);
    assert_eq!(a["max_score"], 4);
    let (status, items) = api.get(&format!("/assignments/{}/items", api.aid()));
    assert_eq!(status, 200);
    let items = items["items"].as_array().unwrap();
    assert_eq!(items.len(), 4);
    assert_eq!(items[0]["id"], format!("{}:q1", api.aid()));
    assert_eq!(items[0]["candidates"].as_array().unwrap().len(), 3);
    assert_eq!(api.get("/assignments/nope").0, 404);
    assert_eq!(api.get("/nowhere").0, 404);
    assert_eq!(api.get("/health").1, json!({"status": "ok"}));
}

#[test]
fn approval_uses_optimistic_versions() {
    let api = Api::start();
    let path = format!("/items/{}:q2/approve", api.aid());
    let (status, item) = api.post(&path, json!({"candidate": 2, "instruction": "Accept H-bonds.", "version": 0}));
    assert_eq!(status, 200, "{item}");
    assert_eq!(item["status"], "approved");
    assert_eq!(item["version"], 1);
    assert_eq!(item["question_specific_instruction"], "Accept H-bonds.");

    // a second editor still holding version 0
    let (status, body) = api.post(&path, json!({"chosen_text": "Is it polar?", "version": 0, "revise": true}));
    assert_eq!(status, 409, "{body}");
    assert!(body["error"].as_str().unwrap().contains("version"));

    let (status, body) = api.post(&path, json!({"candidate": 1, "revise": true}));
    assert_eq!(status, 422, "{body}");
    let (status, _) = api.post("/items/q9/approve", json!({"candidate": 1, "version": 0}));
    assert_eq!(status, 404);
    let resp = api.client.post(api.url(&path)).body("{not json").send().unwrap();
    assert_eq!(resp.status().as_u16(), 422);

    // bare item ids resolve when unambiguous; custom wording is accepted
    let (status, item) = api.post("/items/q2/approve", json!({"chosen_text": "Is it polar?", "version": 1, "revise": true}));
    assert_eq!(status, 200, "{item}");
    assert_eq!(item["approved_question"], "Is it polar?");

    let (status, item) = api.post(&format!("/items/{}:q3/instruction", api.aid()), json!({"instruction": "Both atoms needed.", "version": 0}));
    assert_eq!(status, 200, "{item}");
    assert_eq!(item["version"], 1);

    // the CLI side sees the same state
    let fresh = Service::new(Workspace::open(&api.root).unwrap(), Config::default());
    let set = fresh.evaluation(&api.aid()).unwrap().value;
    assert_eq!(set.item("q2").unwrap().approved_question.as_deref(), Some("Is it polar?"));
    assert_eq!(set.pending(), ["q1", "q3", "q4"]);
}

#[test]
fn runs_need_approved_items() {
    let api = Api::start();
    let (status, body) = api.post("/runs", json!({"backend": "oracle", "wait": true}));
    assert_eq!(status, 409);
    assert!(body["error"].as_str().unwrap().contains("q1, q2, q3, q4"), "{body}");
}

#[test]
fn finished_run_reports_and_relevance() {
    let api = Api::start();
    api.approve_all();
    let (status, run) = api.post("/runs", json!({"backend": "oracle", "shots": {"method": "clustering", "k": 4, "seed": 0}, "wait": true}));
    assert_eq!(status, 201, "{run}");
    assert_eq!(run["status"], "complete");
    assert_eq!(run["progress"]["graded"], 144);
    assert_eq!(run["progress"]["total"], 144);
    let run_id = run["run_id"].as_str().unwrap().to_string();

    let (status, reports) = api.get(&format!("/runs/{run_id}/reports"));
    assert_eq!(status, 200);
    let reports = reports["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 36);
    // justifications are passed through byte for byte
    let cells = run["cells"].as_array().unwrap();
    for report in reports {
        for item in report["per_item"].as_array().unwrap() {
            let cell = cells
                .iter()
                .find(|c| c["response_id"] == report["response_id"] && c["item_id"] == item["item_id"])
                .unwrap();
            assert_eq!(cell["justification"], item["justification"]);
        }
    }

    let cell = &cells[0];
    let cell_id = format!("{run_id}:{}:{}", cell["response_id"].as_str().unwrap(), cell["item_id"].as_str().unwrap());
    let path = format!("/cells/{cell_id}/relevance");
    let (status, updated) = api.post(&path, json!({"flag": "irrelevant", "version": cell["version"], "annotator": "ta"}));
    assert_eq!(status, 200, "{updated}");
    assert_eq!(updated["relevance_flag"], "irrelevant");
    assert_eq!(api.post(&path, json!({"flag": "relevant", "version": cell["version"]})).0, 409);
    assert_eq!(api.post(&path, json!({"flag": "maybe", "version": updated["version"]})).0, 422);
    assert_eq!(api.post(&path, json!({"flag": "relevant"})).0, 422);
    assert_eq!(api.post(&format!("/cells/{run_id}:nobody:q1/relevance"), json!({"flag": "relevant", "version": 0})).0, 404);
    let (_, relevance) = api.get(&format!("/runs/{run_id}/relevance"));
    assert_eq!(relevance["annotated"], 1);
    assert_eq!(relevance["irrelevant"], 1);

    let (_, runs) = api.get("/runs");
    assert_eq!(runs[0]["run_id"], run_id.as_str());
    assert_eq!(api.get("/runs/run-9999").0, 404);
}

/// Grades like the oracle but parks every call after the first `open` until released.
struct Gate {
    rules: qagrade::gateway::RuleBook,
    open: usize,
    calls: AtomicUsize,
    released: Mutex<bool>,
    signal: Condvar,
}

impl CompletionBackend for Gate {
    fn backend_id(&self) -> String {
        "gate".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord, GatewayError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.open {
            let mut released = self.released.lock().unwrap();
            while !*released {
                released = self.signal.wait(released).unwrap();
            }
        }
        let ctx = request.context.as_ref().expect("cell context");
        let text = oracle_grade(&self.rules, &ctx.item_id, &ctx.student_text)?;
        Ok(CompletionRecord {
            prompt_hash: qagrade::gateway::prompt_hash(&request.prompt),
            raw_text: text,
            latency_ms: 0,
            attempt_count: 1,
            backend_id: self.backend_id(),
        })
    }
}

#[test]
fn running_run_reports_progress() {
    let api = Api::start();
    api.approve_all();
    let run = api.service.create_run(&api.aid(), "oracle", None).unwrap();
    let gate = Arc::new(Gate {
        rules: fixture::rules(),
        open: 20,
        calls: AtomicUsize::new(0),
        released: Mutex::new(false),
        signal: Condvar::new(),
    });
    let worker = {
        let (service, gate, run_id) = (Arc::clone(&api.service), Arc::clone(&gate), run.run_id.clone());
        std::thread::spawn(move || service.execute_run(&run_id, Some(gate.as_ref())).unwrap())
    };

    let deadline = Instant::now() + Duration::from_secs(10);
    let body = loop {
        let (status, body) = api.get(&format!("/runs/{}", run.run_id));
        assert_eq!(status, 200);
        if body["progress"]["graded"] == 20 {
            break body;
        }
        assert!(Instant::now() < deadline, "no progress: {}", body["progress"]);
        std::thread::sleep(Duration::from_millis(10));
    };
    assert_eq!(body["status"], "running");
    assert_eq!(body["progress"]["total"], 160);
    assert_eq!(body["progress"]["failed"], 0);

    *gate.released.lock().unwrap() = true;
    gate.signal.notify_all();
    let (done, summary) = worker.join().unwrap();
    assert_eq!(summary.graded, 160);
    assert_eq!(done.status.to_string(), "complete");
    let (_, body) = api.get(&format!("/runs/{}", run.run_id));
    assert_eq!(body["status"], "complete");
    assert_eq!(body["progress"]["graded"], 160);
}

#[test]
fn disagreement_resolution_reads_back() {
    let api = Api::start();
    let (status, list) = api.get(&format!("/labels/disagreements?assignment={}", api.aid()));
    assert_eq!(status, 200);
    let list = list.as_array().unwrap().clone();
    assert!(!list.is_empty());
    let first = &list[0];
    assert_eq!(first["resolution"], Value::Null);
    let id = first["id"].as_str().unwrap();
    let path = format!("/disagreements/{id}/resolve");

    let (status, resolved) = api.post(&path, json!({"label": 1, "version": first["version"], "resolver": "instructor"}));
    assert_eq!(status, 200, "{resolved}");
    assert_eq!(resolved["resolution"], 1);
    let (_, again) = api.get("/labels/disagreements");
    let entry = again.as_array().unwrap().iter().find(|d| d["id"] == id).unwrap();
    assert_eq!(entry["resolution"], 1);
    assert_eq!(entry["resolver_id"], "instructor");

    assert_eq!(api.post(&path, json!({"label": 0, "version": first["version"]})).0, 409);
    assert_eq!(api.post(&path, json!({"label": 0})).0, 422);
    assert_eq!(api.post(&path, json!({"label": 2, "version": resolved["version"]})).0, 422);
    assert_eq!(api.post("/disagreements/nobody:q1/resolve", json!({"label": 1, "version": 0})).0, 404);
}

#[test]
fn cors_preflight_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let ws = tempfile::tempdir().unwrap();
    let service = Arc::new(Service::new(Workspace::open(ws.path()).unwrap(), Config::default()));
    let server = ApiServer::start(service, "127.0.0.1:0", Some(dir.path().to_path_buf())).unwrap();
    let client = reqwest::blocking::Client::new();
    let page = client.get(server.url()).send().unwrap();
    assert_eq!(page.headers()["content-type"], "text/html; charset=utf-8");
    assert_eq!(page.text().unwrap(), "<html>ui</html>");
    let escape = client.get(format!("{}/..%2F..%2Fetc%2Fpasswd", server.url())).send().unwrap();
    assert_eq!(escape.status().as_u16(), 404);
    let pre = client.request(reqwest::Method::OPTIONS, format!("{}/runs", server.url())).send().unwrap();
    assert_eq!(pre.status().as_u16(), 204);
    assert_eq!(pre.headers()["access-control-allow-origin"], "*");
    let list = client.get(format!("{}/assignments", server.url())).send().unwrap();
    assert_eq!(list.json::<Value>().unwrap(), json!([]));
    server.stop();
}

//! The HTTP API the review interface talks to, on an ephemeral port.
//! Pass `--keep` to leave it running.

use std::error::Error;
use std::sync::Arc;

use qagrade::api::ApiServer;
use qagrade::config::Config;
use qagrade::fixture;
use qagrade::service::Service;
use qagrade::workspace::Workspace;
use serde_json::{json, Value};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let service = Service::new(Workspace::open(dir.path())?, Config::default());
    let aid = fixture::assignment().id;
    service.put_assignment(&fixture::assignment(), None)?;
    service.put_responses(&aid, &fixture::responses())?;
    service.put_labels(&aid, &fixture::labels())?;
    service.generate_questions(&aid, 3, &fixture::questions(), false)?;

    let server = ApiServer::start(Arc::new(service), "127.0.0.1:0", None)?;
    let base = server.url();
    let http = reqwest::blocking::Client::new();

    let items: Value = http.get(format!("{base}/assignments/{aid}/items")).send()?.json()?;
    let first = &items["items"][0];
    println!("{} candidates: {}", first["item_id"], first["candidates"]);

    let body = json!({"chosen_text": first["candidates"][1], "version": first["version"]});
    let approved = http.post(format!("{base}/items/{aid}:q1/approve")).json(&body).send()?;
    println!("approve -> {}", approved.status());
    let again = http.post(format!("{base}/items/{aid}:q1/approve")).json(&body).send()?;
    println!("stale approve -> {}", again.status());

    let open: Value = http.get(format!("{base}/labels/disagreements")).send()?.json()?;
    println!("{} open disagreements", open.as_array().map_or(0, Vec::len));

    if std::env::args().any(|a| a == "--keep") {
        println!("serving {base}");
        server.join();
    } else {
        server.stop();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

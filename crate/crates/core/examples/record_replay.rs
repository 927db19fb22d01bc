//! Recording backend replies once and replaying them offline.

use std::error::Error;

use qagrade::fixture;
use qagrade::gateway::{CompletionBackend, CompletionRequest, OracleBackend, Recorder, ReplayBackend, ReplayStore};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let responses = fixture::responses().responses;
    let requests: Vec<CompletionRequest> = responses
        .iter()
        .take(3)
        .map(|r| CompletionRequest::new(format!("Grade q1 for {}", r.id)).with_context("q1", r.text.clone()))
        .collect();

    let recorder = Recorder::new(OracleBackend::new(fixture::rules()), ReplayStore::new(dir.path())?);
    for request in &requests {
        let record = recorder.complete(request)?;
        println!("recorded {}: {}", &record.prompt_hash[..12], record.raw_text);
    }

    let replay = ReplayBackend::open(dir.path())?;
    for request in &requests {
        assert_eq!(replay.complete(request)?.raw_text, recorder.complete(request)?.raw_text);
    }
    println!("replayed {} calls", replay.calls());
    let missing = replay.complete(&CompletionRequest::new("never recorded"));
    println!("unrecorded prompt: {}", missing.unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

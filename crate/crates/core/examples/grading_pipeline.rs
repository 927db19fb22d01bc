//! The whole grading flow in process: ingest, approve questions, pick
//! shots, grade with the keyword oracle, score and compare to consensus.

use std::error::Error;

use qagrade::config::Config;
use qagrade::fixture;
use qagrade::rrag::Choice;
use qagrade::service::{Service, ShotConfig};
use qagrade::shots::SelectionMethod;
use qagrade::workspace::Workspace;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let service = Service::new(Workspace::open(dir.path())?, Config::default());

    let assignment = fixture::assignment();
    let aid = assignment.id.clone();
    service.put_assignment(&assignment, None)?;
    service.put_responses(&aid, &fixture::responses())?;
    service.put_labels(&aid, &fixture::labels())?;
    service.put_feedback(&aid, &fixture::feedback())?;
    service.put_rules(&aid, &fixture::rules())?;
    service.put_instruction(&aid, fixture::GENERAL_INSTRUCTION)?;

    let evaluation = service.generate_questions(&aid, 3, &fixture::questions(), false)?;
    for item in &evaluation.items {
        service.approve(&aid, &item.item_id, Choice::Candidate(1), None, false, None)?;
    }

    let shots = ShotConfig {
        method: SelectionMethod::Clustering,
        k: 4,
        seed: 0,
    };
    let run = service.create_run(&aid, "oracle", Some(&shots))?;
    let (run, summary) = service.execute_run(&run.run_id, None)?;
    println!("{}: {} with {} backend calls", run.run_id, run.status, summary.backend_calls);

    let scores = service.score(&run.run_id)?;
    for bin in &scores.distribution.bins {
        println!("score {}: {}", bin.score, "#".repeat(bin.count));
    }

    let report = service.agree(&aid, &run.run_id, fixture::GROUND_TRUTH)?;
    println!("kappa {:.4} over {} pairs", report.kappa, report.n_pairs);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

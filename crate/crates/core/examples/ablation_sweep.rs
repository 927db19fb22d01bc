//! Agreement with consensus as the number of shots grows, written as CSV
//! and an SVG line chart.

use std::error::Error;

use qagrade::agreement::{plot_svg, write_ablation_csv};
use qagrade::config::Config;
use qagrade::fixture;
use qagrade::rrag::Choice;
use qagrade::service::Service;
use qagrade::shots::SelectionMethod;
use qagrade::workspace::Workspace;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let service = Service::new(Workspace::open(dir.path().join("ws"))?, Config::default());
    let aid = fixture::assignment().id;
    service.put_assignment(&fixture::assignment(), None)?;
    service.put_responses(&aid, &fixture::responses())?;
    service.put_labels(&aid, &fixture::labels())?;
    service.put_feedback(&aid, &fixture::feedback())?;
    service.put_rules(&aid, &fixture::rules())?;
    service.put_instruction(&aid, fixture::GENERAL_INSTRUCTION)?;
    service.generate_questions(&aid, 3, &fixture::questions(), false)?;
    for item in ["q1", "q2", "q3", "q4"] {
        service.approve(&aid, item, Choice::Candidate(1), None, false, None)?;
    }

    let points = service.ablate(&aid, &[0, 1, 2, 4, 8], &[SelectionMethod::Clustering, SelectionMethod::Random], 0, "oracle")?;
    let mut csv = Vec::new();
    write_ablation_csv(&points, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);

    let svg = dir.path().join("ablation.svg");
    std::fs::write(&svg, plot_svg(&points))?;
    println!("chart: {} bytes", std::fs::metadata(&svg)?.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

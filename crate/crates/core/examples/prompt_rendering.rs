//! The grading prompt for one (response, item) cell, with and without shots.

use std::error::Error;

use qagrade::fixture;
use qagrade::gateway::TestEmbedding;
use qagrade::grading::{build_prompt, exemplars, PromptTemplate};
use qagrade::shots::{embed_responses, select_shots, KMeansParams, ShotSet};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let assignment = fixture::assignment();
    let responses = fixture::responses().responses;
    let evaluation = fixture::approved_evaluation();
    let template = PromptTemplate::with_default_layout(fixture::GENERAL_INSTRUCTION.trim_end());
    let item = &evaluation.items[2];

    let zero = ShotSet::zero_shot(&responses);
    let shots = exemplars(&zero, &item.item_id, &responses)?;
    println!("{}\n", build_prompt(&template, &assignment, item, &shots, &responses[0].text)?);

    let matrix = embed_responses(&responses, &TestEmbedding::new(384))?;
    let (mut two, _) = select_shots(&responses, &matrix, &KMeansParams::new(2, 0))?;
    two.attach_feedback(&fixture::feedback());
    let shots = exemplars(&two, &item.item_id, &responses)?;
    println!("{}", build_prompt(&template, &assignment, item, &shots, &responses[5].text)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

//! Candidate evaluation questions per rubric point, then instructor review.

use std::error::Error;

use qagrade::fixture;
use qagrade::rrag::{mark_target_answers, Choice, EvaluationSet};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let assignment = fixture::assignment();
    for target in mark_target_answers(&assignment) {
        println!("{}: {}", target.rubric_point_id, target.conditioned_answer);
    }

    let mut set = EvaluationSet::generate(&assignment, 3, &fixture::questions())?;
    for item in &set.items {
        println!("\n{} (gold excerpt: {:?})", item.item_id, item.gold_excerpt);
        for (n, question) in item.candidates.iter().enumerate() {
            println!("  {}. {question}", n + 1);
        }
    }

    set.item_mut("q1")?.approve(Choice::Candidate(2), None, false, Some(0))?;
    set.item_mut("q2")?.approve(Choice::Text("Is molecule 1 nonpolar?".into()), Some("Accept \"hydrophobic\".".into()), false, Some(0))?;
    println!("\nstill pending: {}", set.pending().join(", "));
    if let Err(e) = set.item_mut("q1")?.approve(Choice::Candidate(3), None, false, Some(1)) {
        println!("second approval refused: {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

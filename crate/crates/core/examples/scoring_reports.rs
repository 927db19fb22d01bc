//! Weighted final scores and the unified feedback shown to a student.

use std::error::Error;

use qagrade::fixture;
use qagrade::model::{Grade, Weight};
use qagrade::scoring::{consolidate, report_markdown, ItemGrade};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut assignment = fixture::assignment();
    assignment.rubric[0].weight = Weight::new(2, 1);
    assignment.rubric[3].weight = Weight::new(1, 2);

    let grades = [
        ItemGrade::new("q1", Grade::ONE, "Names the OH group."),
        ItemGrade::new("q2", Grade::ONE, "Says molecule 3 hydrogen bonds with water."),
        ItemGrade::new("q3", Grade::ZERO, ""),
        ItemGrade::new("q4", Grade::ONE, "Calls molecule 1 nonpolar."),
    ];
    let report = consolidate("9400001", &grades, &assignment)?;
    println!("{} / {}", report.final_score, report.max_score);
    println!("{}", report_markdown(&report));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

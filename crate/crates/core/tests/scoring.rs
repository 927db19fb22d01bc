mod common;

use proptest::prelude::*;
use qagrade::fixture;
use qagrade::model::Grade;
use qagrade::scoring::{consolidate, ItemGrade, ScoreDistribution};

#[test]
fn thousand_randomized_cases() {
    common::scoring_properties(1000).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn consolidation_properties((w, g, r, f, s) in common::scoring_strategy()) {
        common::scoring_case(&w, &g, &r, f, s)?;
    }
}

#[test]
fn unified_feedback_layout() {
    let assignment = fixture::assignment();
    let grades = [
        ItemGrade::new("q1", Grade::ONE, "Has O."),
        ItemGrade::new("q2", Grade::ZERO, ""),
        ItemGrade::new("q3", Grade::ONE, "C and H."),
        ItemGrade::new("q4", Grade::ONE, "Non-polar."),
    ];
    let report = consolidate("9400001", &grades, &assignment).unwrap();
    assert_eq!(report.final_score.to_string(), "3");
    let first = &assignment.rubric[0].text;
    assert!(report.unified_feedback.starts_with(&format!("{first} (grade 1)\nHas O.\n\n")), "{}", report.unified_feedback);
    assert!(report.unified_feedback.contains("(no justification)"));
    assert!(report.unified_feedback.ends_with("Final score: 3 / 4"));
}

#[test]
fn incomplete_grades_are_rejected() {
    let assignment = fixture::assignment();
    let grades = [ItemGrade::new("q1", Grade::ONE, "x"), ItemGrade::new("q1", Grade::ZERO, "y")];
    let err = consolidate("r", &grades, &assignment).unwrap_err().to_string();
    assert!(err.contains("q1") && err.contains("q2"), "{err}");
    assert!(consolidate("r", &[ItemGrade::new("q9", Grade::ONE, "")], &assignment).is_err());
}

#[test]
fn distribution_has_a_bin_per_integer() {
    let assignment = fixture::assignment();
    let d = ScoreDistribution::from_scores([], assignment.max_score());
    assert_eq!(d.bins.len(), 5);
    assert_eq!(d.total(), 0);
}

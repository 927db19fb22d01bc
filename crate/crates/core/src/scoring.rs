//! Consolidates per-item grades into weighted final scores and unified feedback.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::GradingRun;
use crate::model::{item_id_for, Assignment, Grade, Weight};

pub const NO_JUSTIFICATION: &str = "(no justification)";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("response `{response_id}` has incomplete grades (missing: [{}], duplicated: [{}])", missing.join(", "), duplicated.join(", "))]
    IncompleteGrades {
        response_id: String,
        missing: Vec<String>,
        duplicated: Vec<String>,
    },
    #[error("grade for unknown item `{0}`")]
    UnknownItem(String),
    #[error("run `{run_id}` is {status}, scoring needs a complete run")]
    RunNotComplete { run_id: String, status: String },
}

pub type Result<T, E = ScoringError> = std::result::Result<T, E>;

/// One item's grade as input to consolidation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGrade {
    pub item_id: String,
    pub grade: Grade,
    pub justification: String,
}

impl ItemGrade {
    pub fn new(item_id: impl Into<String>, grade: Grade, justification: impl Into<String>) -> Self {
        ItemGrade {
            item_id: item_id.into(),
            grade,
            justification: justification.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: String,
    pub rubric_point: String,
    pub grade: Grade,
    pub weight: Weight,
    pub weighted_points: Weight,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub response_id: String,
    pub per_item: Vec<ItemScore>,
    pub final_score: Weight,
    pub max_score: Weight,
    pub unified_feedback: String,
}

/// Weighted sum of one response's item grades, in rubric order.
pub fn consolidate(response_id: &str, grades: &[ItemGrade], assignment: &Assignment) -> Result<ScoreReport> {
    let mut by_item: BTreeMap<&str, Vec<&ItemGrade>> = BTreeMap::new();
    for g in grades {
        if assignment.item_index(&g.item_id).is_none() {
            return Err(ScoringError::UnknownItem(g.item_id.clone()));
        }
        by_item.entry(g.item_id.as_str()).or_default().push(g);
    }
    let mut missing = Vec::new();
    let mut duplicated = Vec::new();
    let mut per_item = Vec::with_capacity(assignment.rubric.len());
    for (index, point) in assignment.rubric.iter().enumerate() {
        let item_id = item_id_for(index);
        match by_item.get(item_id.as_str()).map(Vec::as_slice) {
            None | Some([]) => missing.push(item_id),
            Some([g]) => per_item.push(ItemScore {
                item_id,
                rubric_point: point.text.clone(),
                grade: g.grade,
                weight: point.weight,
                weighted_points: if g.grade.is_one() { point.weight } else { Weight::ZERO },
                justification: g.justification.clone(),
            }),
            Some(_) => duplicated.push(item_id),
        }
    }
    if !missing.is_empty() || !duplicated.is_empty() {
        return Err(ScoringError::IncompleteGrades {
            response_id: response_id.to_string(),
            missing,
            duplicated,
        });
    }
    let final_score: Weight = per_item.iter().map(|s| s.weighted_points).sum();
    let max_score = assignment.max_score();
    let unified_feedback = unify_feedback(&per_item, final_score, max_score);
    Ok(ScoreReport {
        response_id: response_id.to_string(),
        per_item,
        final_score,
        max_score,
        unified_feedback,
    })
}

/// One section per rubric point (heading: point text and grade, body: justification),
/// then a final score line.
pub fn unify_feedback(per_item: &[ItemScore], final_score: Weight, max_score: Weight) -> String {
    let mut out = String::new();
    for item in per_item {
        let body = item.justification.trim();
        let body = if body.is_empty() { NO_JUSTIFICATION } else { body };
        let _ = write!(out, "{} (grade {})\n{}\n\n", item.rubric_point, item.grade.as_u8(), body);
    }
    let _ = write!(out, "Final score: {final_score} / {max_score}");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub score: Weight,
    pub count: usize,
}

/// Counts of final scores. Every integer from 0 to the maximum has a bin;
/// fractional scores get bins of their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub max_score: Weight,
    pub bins: Vec<HistogramBin>,
}

impl ScoreDistribution {
    pub fn from_scores(scores: impl IntoIterator<Item = Weight>, max_score: Weight) -> Self {
        let mut counts: BTreeMap<Weight, usize> = BTreeMap::new();
        let top = max_score.ratio().floor().to_integer();
        for i in 0..=top {
            counts.insert(Weight::integer(i), 0);
        }
        for s in scores {
            *counts.entry(s).or_default() += 1;
        }
        ScoreDistribution {
            max_score,
            bins: counts.into_iter().map(|(score, count)| HistogramBin { score, count }).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn count(&self, score: Weight) -> usize {
        self.bins.iter().find(|b| b.score == score).map_or(0, |b| b.count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunScores {
    pub run_id: String,
    pub reports: Vec<ScoreReport>,
    pub distribution: ScoreDistribution,
}

/// One report per evaluated response, in the run's response order.
pub fn score_run(run: &GradingRun, assignment: &Assignment) -> Result<RunScores> {
    if !run.is_complete() {
        return Err(ScoringError::RunNotComplete {
            run_id: run.run_id.clone(),
            status: run.status.to_string(),
        });
    }
    let mut grades: BTreeMap<&str, Vec<ItemGrade>> = BTreeMap::new();
    for cell in &run.cells {
        grades
            .entry(cell.response_id.as_str())
            .or_default()
            .push(ItemGrade::new(&cell.item_id, cell.grade, &cell.justification));
    }
    let reports = run
        .eval_ids
        .iter()
        .map(|id| consolidate(id, grades.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]), assignment))
        .collect::<Result<Vec<_>>>()?;
    let distribution = ScoreDistribution::from_scores(reports.iter().map(|r| r.final_score), assignment.max_score());
    Ok(RunScores {
        run_id: run.run_id.clone(),
        reports,
        distribution,
    })
}

pub fn reports_to_jsonl(reports: &[ScoreReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

pub fn report_markdown(report: &ScoreReport) -> String {
    let mut out = format!("# Response {}\n\n", report.response_id);
    let _ = writeln!(out, "| Rubric point | Grade | Weight | Points |");
    let _ = writeln!(out, "|---|---|---|---|");
    for item in &report.per_item {
        let _ = writeln!(out, "| {} | {} | {} | {} |", item.rubric_point, item.grade.as_u8(), item.weight, item.weighted_points);
    }
    let _ = write!(out, "\n{}\n", report.unified_feedback);
    out
}

pub fn reports_markdown(scores: &RunScores) -> String {
    let mut out = format!("# Scores for run {}\n\n## Distribution\n\n| Score | Count |\n|---|---|\n", scores.run_id);
    for bin in &scores.distribution.bins {
        let _ = writeln!(out, "| {} | {} |", bin.score, bin.count);
    }
    for report in &scores.reports {
        out.push('\n');
        out.push_str(&report_markdown(report).replacen("# Response", "## Response", 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RubricPoint;

    fn assignment(weights: &[i64]) -> Assignment {
        Assignment {
            id: "a".into(),
            problem_text: "p".into(),
            reference_answer: "r".into(),
            rubric: weights
                .iter()
                .enumerate()
                .map(|(i, w)| RubricPoint {
                    id: format!("p{}", i + 1),
                    text: ["O/OH", "H-Bonds", "C and H", "non-polar"][i % 4].into(),
                    weight: Weight::integer(*w),
                })
                .collect(),
        }
    }

    fn grades(bits: &[u8]) -> Vec<ItemGrade> {
        bits.iter()
            .enumerate()
            .map(|(i, b)| ItemGrade::new(item_id_for(i), Grade::from_u8(*b).unwrap(), format!("because {i}")))
            .collect()
    }

    #[test]
    fn weighted_sums() {
        let a = assignment(&[1, 1, 1, 1]);
        assert_eq!(consolidate("r", &grades(&[1, 0, 1, 1]), &a).unwrap().final_score, Weight::integer(3));
        let full = consolidate("r", &grades(&[1, 1, 1, 1]), &a).unwrap();
        assert_eq!((full.final_score, full.max_score), (Weight::integer(4), Weight::integer(4)));
        let w = consolidate("r", &grades(&[1, 1, 1, 0]), &assignment(&[2, 1, 1, 1])).unwrap();
        assert_eq!((w.final_score, w.max_score), (Weight::integer(4), Weight::integer(5)));
    }

    #[test]
    fn incomplete_and_duplicate_cells() {
        let a = assignment(&[1, 1, 1, 1]);
        let err = consolidate("r", &grades(&[1, 0, 1]), &a).unwrap_err();
        assert_eq!(
            err,
            ScoringError::IncompleteGrades {
                response_id: "r".into(),
                missing: vec!["q4".into()],
                duplicated: vec![]
            }
        );
        let mut dup = grades(&[1, 0, 1, 1]);
        dup.push(ItemGrade::new("q2", Grade::ONE, "again"));
        assert!(matches!(consolidate("r", &dup, &a), Err(ScoringError::IncompleteGrades { duplicated, .. }) if duplicated == ["q2"]));
        assert!(matches!(consolidate("r", &grades(&[1, 1, 1, 1, 1]), &a), Err(ScoringError::UnknownItem(_))));
    }

    #[test]
    fn feedback_document() {
        let a = assignment(&[1, 1, 1, 1]);
        let mut g = grades(&[1, 0, 1, 1]);
        g[3].justification = "  ".into();
        let report = consolidate("r", &g, &a).unwrap();
        assert_eq!(
            report.unified_feedback,
            "O/OH (grade 1)\nbecause 0\n\nH-Bonds (grade 0)\nbecause 1\n\nC and H (grade 1)\nbecause 2\n\nnon-polar (grade 1)\n(no justification)\n\nFinal score: 3 / 4"
        );
        assert_eq!(consolidate("r", &g, &a).unwrap().unified_feedback, report.unified_feedback);
        let md = report_markdown(&report);
        assert!(md.contains("| H-Bonds | 0 | 1 | 0 |"));
    }

    #[test]
    fn distribution_bins() {
        let d = ScoreDistribution::from_scores([Weight::integer(4), Weight::integer(4), Weight::new(1, 2)], Weight::integer(4));
        assert_eq!(d.total(), 3);
        assert_eq!(d.bins.len(), 6);
        assert_eq!(d.count(Weight::integer(4)), 2);
        assert_eq!(d.count(Weight::integer(0)), 0);
    }
}

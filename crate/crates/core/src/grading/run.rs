use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::template::{build_prompt, exemplars, PromptTemplate, ShotExemplar, FORMAT_REMINDER};
use super::{parse_grade, GradingError, ParseError, Result, ScorePattern};
use crate::gateway::{BackendConfig, CompletionBackend, CompletionRecord, CompletionRequest};
use crate::model::{Assignment, CellKey, Grade, LabelRole, LabelSet, StudentResponse};
use crate::rrag::{EvaluationItem, EvaluationSet};
use crate::scoring::ScoreDistribution;
use crate::shots::ShotSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    Complete,
    Failed,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Pending => "pending",
            RunStatus::Running => "running",
            RunStatus::Complete => "complete",
            RunStatus::Failed => "failed",
        })
    }
}

/// Human judgment of whether a justification supports its grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl std::str::FromStr for Relevance {
    type Err = GradingError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relevant" => Ok(Relevance::Relevant),
            "irrelevant" => Ok(Relevance::Irrelevant),
            other => Err(GradingError::Validation(format!("relevance flag must be `relevant` or `irrelevant`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub flag: Relevance,
    pub annotator_id: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeCell {
    pub response_id: String,
    pub item_id: String,
    pub grade: Grade,
    pub justification: String,
    #[serde(default)]
    pub relevance_flag: Option<Relevance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
    pub prompt_hash: String,
    pub backend_id: String,
    pub attempt_count: u32,
    pub latency_ms: u64,
    pub pattern: ScorePattern,
    /// Whether the grade came from the format-reminder retry.
    #[serde(default)]
    pub format_retry: bool,
    #[serde(default)]
    pub version: u64,
}

impl GradeCell {
    fn from_completion(response_id: &str, item_id: &str, record: CompletionRecord, grade: Grade, pattern: ScorePattern, format_retry: bool) -> Self {
        GradeCell {
            response_id: response_id.to_string(),
            item_id: item_id.to_string(),
            grade,
            justification: record.raw_text,
            relevance_flag: None,
            annotations: Vec::new(),
            prompt_hash: record.prompt_hash,
            backend_id: record.backend_id,
            attempt_count: record.attempt_count,
            latency_ms: record.latency_ms,
            pattern,
            format_retry,
            version: 0,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey::new(&self.response_id, &self.item_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub response_id: String,
    pub item_id: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunProgress {
    pub total: usize,
    pub graded: usize,
    pub failed: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingRun {
    pub run_id: String,
    pub assignment_id: String,
    pub shot_set: ShotSet,
    pub backend: BackendConfig,
    pub template: PromptTemplate,
    pub items: Vec<EvaluationItem>,
    pub eval_ids: Vec<String>,
    pub status: RunStatus,
    pub cells: Vec<GradeCell>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ScoreDistribution>,
}

impl GradingRun {
    /// A pending run over the shot set's evaluation partition. Every item must
    /// be approved and, for few-shot runs, every shot needs per-item feedback.
    pub fn new(
        run_id: impl Into<String>,
        assignment: &Assignment,
        evaluation: &EvaluationSet,
        shot_set: ShotSet,
        backend: BackendConfig,
        template: PromptTemplate,
        created_at: DateTime<Utc>,
    ) -> Result<Self> {
        if evaluation.assignment_id != assignment.id {
            return Err(GradingError::Precondition(format!(
                "evaluation set belongs to `{}`, not `{}`",
                evaluation.assignment_id, assignment.id
            )));
        }
        let pending = evaluation.pending();
        if !pending.is_empty() {
            return Err(GradingError::PendingItems(pending));
        }
        shot_set.ensure_feedback(evaluation.items.iter().map(|i| i.item_id.as_str()))?;
        Ok(GradingRun {
            run_id: run_id.into(),
            assignment_id: assignment.id.clone(),
            eval_ids: shot_set.eval_ids.clone(),
            shot_set,
            backend,
            template,
            items: evaluation.items.clone(),
            status: RunStatus::Pending,
            cells: Vec::new(),
            failures: Vec::new(),
            created_at,
            distribution: None,
        })
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.eval_ids.len() * self.items.len()
    }

    pub fn progress(&self) -> RunProgress {
        let graded = self.cells.len();
        RunProgress {
            total: self.total_cells(),
            graded,
            failed: self.failures.len(),
            remaining: self.total_cells().saturating_sub(graded),
        }
    }

    pub fn cell(&self, response_id: &str, item_id: &str) -> Option<&GradeCell> {
        self.cells.iter().find(|c| c.response_id == response_id && c.item_id == item_id)
    }

    /// Cells of the grid that have no grade yet, in grid order.
    pub fn unresolved(&self) -> Vec<CellKey> {
        let done: BTreeSet<CellKey> = self.cells.iter().map(GradeCell::key).collect();
        self.eval_ids
            .iter()
            .flat_map(|r| self.items.iter().map(move |i| CellKey::new(r, &i.item_id)))
            .filter(|k| !done.contains(k))
            .collect()
    }

    /// Adds journaled cells that are part of the grid and not yet present.
    pub fn merge_cells(&mut self, cells: impl IntoIterator<Item = GradeCell>) -> usize {
        let grid: BTreeSet<CellKey> = self
            .eval_ids
            .iter()
            .flat_map(|r| self.items.iter().map(move |i| CellKey::new(r, &i.item_id)))
            .collect();
        let mut present: BTreeSet<CellKey> = self.cells.iter().map(GradeCell::key).collect();
        let mut added = 0;
        for cell in cells {
            let key = cell.key();
            if grid.contains(&key) && present.insert(key) {
                self.cells.push(cell);
                added += 1;
            }
        }
        self.sort_cells();
        self.refresh_status();
        added
    }

    fn sort_cells(&mut self) {
        let response_order: HashMap<&str, usize> = self.eval_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let item_order: HashMap<&str, usize> = self.items.iter().enumerate().map(|(i, it)| (it.item_id.as_str(), i)).collect();
        let mut cells = std::mem::take(&mut self.cells);
        cells.sort_by_key(|c| (response_order[c.response_id.as_str()], item_order[c.item_id.as_str()]));
        self.cells = cells;
    }

    fn refresh_status(&mut self) {
        if self.cells.len() == self.total_cells() {
            self.status = RunStatus::Complete;
            self.failures.clear();
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    /// The run's grades as a label set, for agreement against human labels.
    pub fn label_set(&self) -> LabelSet {
        let mut labels = LabelSet::new(&self.run_id, LabelRole::Grader);
        for cell in &self.cells {
            labels.cells.insert(cell.key(), cell.grade);
        }
        labels
    }

    /// Renders the prompt for one cell of this run.
    pub fn prompt_for(&self, assignment: &Assignment, responses: &[StudentResponse], response_id: &str, item_id: &str) -> Result<String> {
        let item = self
            .items
            .iter()
            .find(|i| i.item_id == item_id)
            .ok_or_else(|| GradingError::UnknownCell(format!("{response_id}:{item_id}")))?;
        let student = responses
            .iter()
            .find(|r| r.id == response_id)
            .ok_or_else(|| GradingError::UnknownResponse(response_id.to_string()))?;
        let shots = exemplars(&self.shot_set, item_id, responses)?;
        build_prompt(&self.template, assignment, item, &shots, &student.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeOptions {
    pub workers: usize,
}

impl Default for GradeOptions {
    fn default() -> Self {
        GradeOptions { workers: 8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeSummary {
    /// Cells that were unresolved when grading started.
    pub attempted: usize,
    pub graded: usize,
    pub failed: usize,
    pub backend_calls: usize,
}

enum Outcome {
    Graded(GradeCell),
    Failed(CellFailure),
}

/// Grades every unresolved cell of `run`. Already graded cells are never
/// sent again, so calling this on a failed or interrupted run resumes it.
/// Each new cell is passed to `sink` (a durable journal) before it counts.
pub fn grade_matrix(
    run: &mut GradingRun,
    assignment: &Assignment,
    responses: &[StudentResponse],
    backend: &dyn CompletionBackend,
    options: GradeOptions,
    sink: &(dyn Fn(&GradeCell) -> std::io::Result<()> + Sync),
) -> Result<GradeSummary> {
    if run.is_complete() {
        return Ok(GradeSummary::default());
    }
    let pending: Vec<String> = run.items.iter().filter(|i| !i.is_approved()).map(|i| i.item_id.clone()).collect();
    if !pending.is_empty() {
        return Err(GradingError::PendingItems(pending));
    }
    let texts: HashMap<&str, &str> = responses.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    for id in &run.eval_ids {
        if !texts.contains_key(id.as_str()) {
            return Err(GradingError::UnknownResponse(id.clone()));
        }
    }
    let shots: HashMap<&str, Vec<ShotExemplar<'_>>> = run
        .items
        .iter()
        .map(|i| Ok((i.item_id.as_str(), exemplars(&run.shot_set, &i.item_id, responses)?)))
        .collect::<Result<_>>()?;
    let items: HashMap<&str, &EvaluationItem> = run.items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let tasks = run.unresolved();

    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let outcomes: Mutex<Vec<Outcome>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<GradingError>> = Mutex::new(None);
    let template = &run.template;

    let grade_one = |key: &CellKey| -> std::result::Result<Outcome, GradingError> {
        let item = items[key.item_id.as_str()];
        let text = texts[key.response_id.as_str()];
        let prompt = build_prompt(template, assignment, item, &shots[key.item_id.as_str()], text)?;
        let mut request = CompletionRequest::new(prompt).with_context(&key.item_id, text);
        calls.fetch_add(1, Ordering::Relaxed);
        let record = backend.complete(&request)?;
        match parse_grade(&record.raw_text) {
            Ok(parsed) => return Ok(Outcome::Graded(GradeCell::from_completion(&key.response_id, &key.item_id, record, parsed.grade, parsed.pattern, false))),
            Err(ParseError::Empty | ParseError::Unparseable { .. }) => {}
        }
        log::warn!("unparseable output for {key}; retrying with a format reminder");
        request.prompt = format!("{}\n\n{FORMAT_REMINDER}", request.prompt);
        calls.fetch_add(1, Ordering::Relaxed);
        let retry = backend.complete(&request)?;
        Ok(match parse_grade(&retry.raw_text) {
            Ok(parsed) => Outcome::Graded(GradeCell::from_completion(&key.response_id, &key.item_id, retry, parsed.grade, parsed.pattern, true)),
            Err(e) => Outcome::Failed(CellFailure {
                response_id: key.response_id.clone(),
                item_id: key.item_id.clone(),
                message: e.to_string(),
                raw_text: Some(retry.raw_text),
            }),
        })
    };

    run.status = RunStatus::Running;
    run.failures.clear();
    std::thread::scope(|scope| {
        for _ in 0..options.workers.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(key) = tasks.get(index) else { break };
                let outcome = match grade_one(key) {
                    Ok(outcome) => outcome,
                    Err(GradingError::Gateway(e)) => {
                        // Backend trouble affects every remaining cell; stop and leave the run resumable.
                        stop.store(true, Ordering::Relaxed);
                        Outcome::Failed(CellFailure {
                            response_id: key.response_id.clone(),
                            item_id: key.item_id.clone(),
                            message: e.to_string(),
                            raw_text: None,
                        })
                    }
                    Err(e) => {
                        stop.store(true, Ordering::Relaxed);
                        fatal.lock().expect("poisoned").get_or_insert(e);
                        break;
                    }
                };
                if let Outcome::Graded(cell) = &outcome {
                    if let Err(e) = sink(cell) {
                        stop.store(true, Ordering::Relaxed);
                        fatal.lock().expect("poisoned").get_or_insert(GradingError::Journal(e));
                        break;
                    }
                }
                outcomes.lock().expect("poisoned").push(outcome);
            });
        }
    });

    let mut summary = GradeSummary {
        attempted: tasks.len(),
        backend_calls: calls.into_inner(),
        ..GradeSummary::default()
    };
    let mut graded = Vec::new();
    for outcome in outcomes.into_inner().expect("poisoned") {
        match outcome {
            Outcome::Graded(cell) => graded.push(cell),
            Outcome::Failed(failure) => run.failures.push(failure),
        }
    }
    summary.graded = graded.len();
    summary.failed = run.failures.len();
    run.failures.sort_by(|a, b| (&a.response_id, &a.item_id).cmp(&(&b.response_id, &b.item_id)));
    run.merge_cells(graded);
    if !run.is_complete() {
        run.status = RunStatus::Failed;
    }
    if let Some(e) = fatal.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(summary)
}

/// Records a human relevance judgment on one graded cell.
pub fn annotate_relevance<'r>(
    run: &'r mut GradingRun,
    response_id: &str,
    item_id: &str,
    flag: Relevance,
    annotator_id: &str,
    expected_version: Option<u64>,
    at: DateTime<Utc>,
) -> Result<&'r GradeCell> {
    let cell = run
        .cells
        .iter_mut()
        .find(|c| c.response_id == response_id && c.item_id == item_id)
        .ok_or_else(|| GradingError::UnknownCell(format!("{response_id}:{item_id}")))?;
    if let Some(expected) = expected_version {
        if expected != cell.version {
            return Err(GradingError::VersionConflict {
                cell: format!("{response_id}:{item_id}"),
                expected,
                current: cell.version,
            });
        }
    }
    cell.relevance_flag = Some(flag);
    cell.annotations.push(Annotation {
        flag,
        annotator_id: annotator_id.to_string(),
        at,
    });
    cell.version += 1;
    Ok(cell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub annotated: usize,
    pub irrelevant: usize,
}

impl RelevanceReport {
    pub fn irrelevant_rate(&self) -> Option<f64> {
        (self.annotated > 0).then(|| self.irrelevant as f64 / self.annotated as f64)
    }
}

impl std::fmt::Display for RelevanceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} irrelevant", self.irrelevant, self.annotated)
    }
}

pub fn relevance_report(run: &GradingRun) -> RelevanceReport {
    let flags: Vec<Relevance> = run.cells.iter().filter_map(|c| c.relevance_flag).collect();
    RelevanceReport {
        annotated: flags.len(),
        irrelevant: flags.iter().filter(|f| **f == Relevance::Irrelevant).count(),
    }
}

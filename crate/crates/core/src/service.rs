//! Pipeline operations over a workspace, shared by the CLI and the HTTP API.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{self, ablation_sweep, AblationPoint, AblationRequest, AgreementError, AgreementReport, Disagreement, Reconciliation};
use crate::config::{Config, ConfigError};
use crate::gateway::{BackendConfig, BackendKind, CompletionBackend, GatewayError, RuleBook};
use crate::grading::{self, grade_matrix, GradeCell, GradeOptions, GradeSummary, GradingError, GradingRun, PromptTemplate, Relevance, RelevanceReport};
use crate::model::{Assignment, Grade, IngestError, LabelRole, LabelSet, ResponseCorpus, StudentResponse};
use crate::rrag::{Choice, EvaluationItem, EvaluationSet, QuestionGenerator, RragError};
use crate::scoring::{score_run, RunScores, ScoringError};
use crate::shots::{embed_responses, random_shots, select_shots, EmbeddingMatrix, FeedbackBook, KMeansParams, SelectionMethod, ShotError, ShotSet};
use crate::workspace::{self as keys, Versioned, Workspace, WorkspaceError};

/// Error categories map onto HTTP statuses and CLI exit codes.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::NotFound(_) => 404,
            ServiceError::Conflict(_) | ServiceError::Precondition(_) => 409,
            ServiceError::Validation(_) => 422,
            ServiceError::Backend(_) => 502,
            ServiceError::Internal(_) => 500,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl From<WorkspaceError> for ServiceError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::NotFound(_) => ServiceError::NotFound(e.to_string()),
            WorkspaceError::VersionConflict { .. } => ServiceError::Conflict(e.to_string()),
            WorkspaceError::InvalidKey(_) => ServiceError::Validation(e.to_string()),
            _ => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<IngestError> for ServiceError {
    fn from(e: IngestError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<ConfigError> for ServiceError {
    fn from(e: ConfigError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<GatewayError> for ServiceError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) | GatewayError::InvalidRequest(_) => ServiceError::Validation(e.to_string()),
            _ => ServiceError::Backend(e.to_string()),
        }
    }
}

impl From<RragError> for ServiceError {
    fn from(e: RragError) -> Self {
        match e {
            RragError::VersionConflict { .. } | RragError::AlreadyApproved(_) => ServiceError::Conflict(e.to_string()),
            RragError::UnknownItem(_) => ServiceError::NotFound(e.to_string()),
            RragError::PendingItems(_) => ServiceError::Precondition(e.to_string()),
            RragError::Generation { .. } => ServiceError::Backend(e.to_string()),
            _ => ServiceError::Validation(e.to_string()),
        }
    }
}

impl From<ShotError> for ServiceError {
    fn from(e: ShotError) -> Self {
        match e {
            ShotError::Gateway(g) => g.into(),
            ShotError::MissingFeedback { .. } => ServiceError::Precondition(e.to_string()),
            _ => ServiceError::Validation(e.to_string()),
        }
    }
}

impl From<GradingError> for ServiceError {
    fn from(e: GradingError) -> Self {
        match e {
            GradingError::Shot(s) => s.into(),
            GradingError::Gateway(g) => g.into(),
            GradingError::PendingItems(_) | GradingError::Precondition(_) => ServiceError::Precondition(e.to_string()),
            GradingError::UnknownCell(_) => ServiceError::NotFound(e.to_string()),
            GradingError::VersionConflict { .. } => ServiceError::Conflict(e.to_string()),
            GradingError::Journal(_) => ServiceError::Internal(e.to_string()),
            _ => ServiceError::Validation(e.to_string()),
        }
    }
}

impl From<ScoringError> for ServiceError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::RunNotComplete { .. } => ServiceError::Precondition(e.to_string()),
            _ => ServiceError::Validation(e.to_string()),
        }
    }
}

impl From<AgreementError> for ServiceError {
    fn from(e: AgreementError) -> Self {
        match e {
            AgreementError::Grading(g) => g.into(),
            AgreementError::Shot(s) => s.into(),
            AgreementError::UnknownDisagreement(_) => ServiceError::NotFound(e.to_string()),
            AgreementError::VersionConflict { .. } => ServiceError::Conflict(e.to_string()),
            _ => ServiceError::Validation(e.to_string()),
        }
    }
}

/// How to pick shots for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub method: SelectionMethod,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

/// A disagreement together with the assignment it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementView {
    pub assignment_id: String,
    #[serde(flatten)]
    pub disagreement: Disagreement,
}

pub struct Service {
    pub ws: Workspace,
    pub config: Config,
}

impl Service {
    pub fn new(ws: Workspace, config: Config) -> Self {
        Service { ws, config }
    }

    // ---- lookup helpers ----

    pub fn assignment_ids(&self) -> Result<Vec<String>> {
        Ok(self
            .ws
            .list("assignments/")?
            .into_iter()
            .map(|k| k.trim_start_matches("assignments/").to_string())
            .collect())
    }

    /// The given assignment id, or the only one in the workspace.
    pub fn resolve_assignment(&self, id: Option<&str>) -> Result<String> {
        if let Some(id) = id {
            return Ok(id.to_string());
        }
        let ids = self.assignment_ids()?;
        match ids.as_slice() {
            [one] => Ok(one.clone()),
            [] => Err(ServiceError::Precondition("no assignment ingested yet; run `ingest --assignment FILE`".into())),
            _ => Err(ServiceError::Validation(format!("several assignments exist ({}); pass --assignment", ids.join(", ")))),
        }
    }

    pub fn assignment(&self, id: &str) -> Result<Assignment> {
        Ok(self
            .ws
            .get::<Assignment>(&keys::assignment_key(id))?
            .ok_or_else(|| ServiceError::NotFound(format!("unknown assignment `{id}`")))?
            .value)
    }

    pub fn responses(&self, assignment_id: &str) -> Result<ResponseCorpus> {
        Ok(self
            .ws
            .get::<ResponseCorpus>(&keys::responses_key(assignment_id))?
            .ok_or_else(|| ServiceError::Precondition(format!("no responses for `{assignment_id}`; run `ingest --responses FILE`")))?
            .value)
    }

    pub fn evaluation(&self, assignment_id: &str) -> Result<Versioned<EvaluationSet>> {
        self.ws
            .get(&keys::evaluation_key(assignment_id))?
            .ok_or_else(|| ServiceError::NotFound(format!("no evaluation items for `{assignment_id}`; run `gen-questions` first")))
    }

    pub fn label_sets(&self, assignment_id: &str) -> Result<Vec<LabelSet>> {
        let prefix = format!("labels/{assignment_id}/");
        self.ws
            .list(&prefix)?
            .iter()
            .map(|k| Ok(self.ws.require::<LabelSet>(k)?.value))
            .collect()
    }

    /// An ingested ground-truth label set, else the reconciled one.
    pub fn ground_truth(&self, assignment_id: &str) -> Result<LabelSet> {
        if let Some(set) = self.label_sets(assignment_id)?.into_iter().find(|s| s.role == LabelRole::GroundTruth) {
            return Ok(set);
        }
        if let Some(rec) = self.ws.get::<Reconciliation>(&keys::reconciliation_key(assignment_id))? {
            return Ok(rec.value.ground_truth);
        }
        Err(ServiceError::Precondition(format!("no ground-truth labels for `{assignment_id}`; ingest them or run `reconcile`")))
    }

    pub fn feedback(&self, assignment_id: &str) -> Result<FeedbackBook> {
        Ok(self.ws.get::<FeedbackBook>(&keys::feedback_key(assignment_id))?.map(|v| v.value).unwrap_or_default())
    }

    pub fn run(&self, run_id: &str) -> Result<Versioned<GradingRun>> {
        self.ws
            .get(&keys::run_key(run_id))?
            .ok_or_else(|| ServiceError::NotFound(format!("unknown run `{run_id}`")))
    }

    /// The stored run with any journaled cells folded in (live progress view).
    pub fn run_view(&self, run_id: &str) -> Result<GradingRun> {
        let mut run = self.run(run_id)?.value;
        if !run.is_complete() {
            let status = run.status;
            run.merge_cells(self.ws.journaled_cells(run_id)?);
            if !run.is_complete() {
                run.status = status;
            }
        }
        Ok(run)
    }

    pub fn run_ids(&self) -> Result<Vec<String>> {
        Ok(self.ws.list("runs/")?.into_iter().map(|k| k.trim_start_matches("runs/").to_string()).collect())
    }

    pub fn template(&self, assignment_id: &str) -> Result<PromptTemplate> {
        let instruction = match self.config.general_instruction()? {
            Some(text) => text,
            None => self
                .ws
                .get::<String>(&format!("instructions/{assignment_id}"))?
                .map(|v| v.value)
                .ok_or_else(|| ServiceError::Precondition("no general instruction; pass `ingest --instruction FILE` or set it in the config".into()))?,
        };
        Ok(match &self.config.grading.template {
            Some(path) => PromptTemplate::load(instruction, &self.config.resolve_path(path))?,
            None => PromptTemplate::new(instruction, grading::DEFAULT_TEMPLATE)?,
        })
    }

    /// Instantiates a completion backend from its recorded configuration.
    pub fn completion_backend(&self, config: &BackendConfig, assignment_id: &str) -> Result<Box<dyn CompletionBackend>> {
        let rules = if config.kind == BackendKind::Oracle && config.rules_path.is_none() {
            Some(
                self.ws
                    .get::<RuleBook>(&keys::rules_key(assignment_id))?
                    .ok_or_else(|| ServiceError::Precondition(format!("oracle backend needs keyword rules; run `ingest --oracle-rules FILE` for `{assignment_id}`")))?
                    .value,
            )
        } else {
            None
        };
        Ok(config.completion_backend(&self.config.base_dir, rules)?)
    }

    // ---- ingest ----

    pub fn put_assignment(&self, assignment: &Assignment, expected_version: Option<u64>) -> Result<u64> {
        assignment.validate()?;
        Ok(self.ws.put(&keys::assignment_key(&assignment.id), assignment, expected_version)?)
    }

    pub fn put_responses(&self, assignment_id: &str, corpus: &ResponseCorpus) -> Result<u64> {
        self.assignment(assignment_id)?;
        Ok(self.ws.put(&keys::responses_key(assignment_id), corpus, None)?)
    }

    pub fn put_labels(&self, assignment_id: &str, sets: &[LabelSet]) -> Result<()> {
        for set in sets {
            self.ws.put(&keys::labels_key(assignment_id, &set.grader_id), set, None)?;
        }
        Ok(())
    }

    pub fn put_feedback(&self, assignment_id: &str, book: &FeedbackBook) -> Result<u64> {
        Ok(self.ws.put(&keys::feedback_key(assignment_id), book, None)?)
    }

    pub fn put_rules(&self, assignment_id: &str, rules: &RuleBook) -> Result<u64> {
        Ok(self.ws.put(&keys::rules_key(assignment_id), rules, None)?)
    }

    pub fn put_instruction(&self, assignment_id: &str, text: &str) -> Result<u64> {
        if text.trim().is_empty() {
            return Err(ServiceError::Validation("general instruction is empty".into()));
        }
        Ok(self.ws.put(&format!("instructions/{assignment_id}"), text, None)?)
    }

    // ---- questions ----

    /// Generates candidates for every rubric point. Replacing a set that already
    /// has approvals needs `force`.
    pub fn generate_questions(&self, assignment_id: &str, k: usize, generator: &dyn QuestionGenerator, force: bool) -> Result<EvaluationSet> {
        let assignment = self.assignment(assignment_id)?;
        let key = keys::evaluation_key(assignment_id);
        let existing = self.ws.get::<EvaluationSet>(&key)?;
        if let Some(existing) = &existing {
            if !force && existing.value.items.iter().any(EvaluationItem::is_approved) {
                return Err(ServiceError::Conflict(format!("`{assignment_id}` already has approved items; pass --force to regenerate")));
            }
        }
        let set = EvaluationSet::generate(&assignment, k, generator)?;
        self.ws.put(&key, &set, Some(existing.map_or(0, |e| e.version)))?;
        Ok(set)
    }

    /// Approves one item. `expected_version` is the item's own version.
    pub fn approve(&self, assignment_id: &str, item_id: &str, choice: Choice, instruction: Option<String>, revise: bool, expected_version: Option<u64>) -> Result<EvaluationItem> {
        let key = keys::evaluation_key(assignment_id);
        self.evaluation(assignment_id)?;
        let (item, _) = self.ws.update::<EvaluationSet, _, ServiceError>(&key, |set| {
            let item = set.item_mut(item_id)?;
            item.approve(choice.clone(), instruction.clone(), revise, expected_version)?;
            Ok(item.clone())
        })?;
        Ok(item)
    }

    pub fn instruct(&self, assignment_id: &str, item_id: &str, instruction: Option<String>, expected_version: Option<u64>) -> Result<EvaluationItem> {
        let key = keys::evaluation_key(assignment_id);
        self.evaluation(assignment_id)?;
        let (item, _) = self.ws.update::<EvaluationSet, _, ServiceError>(&key, |set| {
            let item = set.item_mut(item_id)?;
            item.set_instruction(instruction.clone(), expected_version)?;
            Ok(item.clone())
        })?;
        Ok(item)
    }

    // ---- shots ----

    fn embeddings(&self, assignment_id: &str, responses: &[StudentResponse]) -> Result<(EmbeddingMatrix, String)> {
        let config = self.config.embedding_backend()?;
        let backend = config.embedding_backend()?;
        let backend_id = backend.backend_id();
        let key = keys::embeddings_key(assignment_id, &backend_id);
        if let Some(cached) = self.ws.get::<EmbeddingMatrix>(&key)? {
            let mut ids: Vec<&str> = cached.value.response_ids().iter().map(String::as_str).collect();
            ids.sort_unstable();
            if ids == responses.iter().map(|r| r.id.as_str()).collect::<Vec<_>>() {
                return Ok((cached.value, backend_id));
            }
        }
        let matrix = embed_responses(responses, backend.as_ref())?;
        self.ws.put(&key, &matrix, None)?;
        Ok((matrix, backend_id))
    }

    pub fn build_shot_set(&self, assignment_id: &str, shots: &ShotConfig) -> Result<ShotSet> {
        let corpus = self.responses(assignment_id)?;
        let responses = &corpus.responses;
        let mut set = if shots.k == 0 {
            ShotSet {
                method: shots.method,
                seed: shots.seed,
                ..ShotSet::zero_shot(responses)
            }
        } else {
            match shots.method {
                SelectionMethod::Random => random_shots(responses, shots.k, shots.seed)?,
                SelectionMethod::Clustering => {
                    let (matrix, backend_id) = self.embeddings(assignment_id, responses)?;
                    let (mut set, _) = select_shots(responses, &matrix, &KMeansParams::new(shots.k, shots.seed))?;
                    set.embedding_backend = Some(backend_id);
                    set
                }
            }
        };
        set.attach_feedback(&self.feedback(assignment_id)?);
        Ok(set)
    }

    /// Selects shots and stores them as the assignment's current shot set.
    pub fn select_shots(&self, assignment_id: &str, shots: &ShotConfig) -> Result<ShotSet> {
        let set = self.build_shot_set(assignment_id, shots)?;
        self.ws.put(&keys::shots_key(assignment_id), &set, None)?;
        Ok(set)
    }

    pub fn current_shots(&self, assignment_id: &str) -> Result<Option<ShotSet>> {
        Ok(self.ws.get::<ShotSet>(&keys::shots_key(assignment_id))?.map(|v| v.value))
    }

    // ---- runs ----

    /// Creates and stores a pending run. Without `shots` the current shot set
    /// is used, or a zero-shot partition when none was selected.
    pub fn create_run(&self, assignment_id: &str, backend_name: &str, shots: Option<&ShotConfig>) -> Result<GradingRun> {
        let assignment = self.assignment(assignment_id)?;
        let evaluation = self.evaluation(assignment_id)?.value;
        let pending = evaluation.pending();
        if !pending.is_empty() {
            return Err(ServiceError::Precondition(format!(
                "cannot grade `{assignment_id}`: items pending approval: {} (approve them with `review approve`)",
                pending.join(", ")
            )));
        }
        let shot_set = match shots {
            Some(cfg) => self.build_shot_set(assignment_id, cfg)?,
            None => match self.current_shots(assignment_id)? {
                Some(set) => set,
                None => ShotSet::zero_shot(&self.responses(assignment_id)?.responses),
            },
        };
        let backend = self.config.backend(backend_name)?;
        backend.validate()?;
        let template = self.template(assignment_id)?;
        let run_id = self.ws.next_run_id()?;
        let run = GradingRun::new(run_id, &assignment, &evaluation, shot_set, backend, template, Utc::now())?;
        self.ws.put(&keys::run_key(&run.run_id), &run, Some(0))?;
        Ok(run)
    }

    /// Grades every unresolved cell of a stored run, journaling cells as they
    /// complete. Safe to call again after a crash or backend outage.
    pub fn execute_run(&self, run_id: &str, backend: Option<&dyn CompletionBackend>) -> Result<(GradingRun, GradeSummary)> {
        let stored = self.run(run_id)?;
        let mut run = stored.value;
        let assignment = self.assignment(&run.assignment_id)?;
        let responses = self.responses(&run.assignment_id)?.responses;
        run.merge_cells(self.ws.journaled_cells(run_id)?);
        let owned;
        let backend: &dyn CompletionBackend = match backend {
            Some(b) => b,
            None => {
                owned = self.completion_backend(&run.backend, &run.assignment_id)?;
                owned.as_ref()
            }
        };
        if !run.is_complete() {
            run.status = grading::RunStatus::Running;
            self.ws.put(&keys::run_key(run_id), &run, Some(stored.version))?;
        }
        let sink = |cell: &GradeCell| self.ws.append_cell(run_id, cell);
        let options = GradeOptions {
            workers: self.config.grading.workers,
        };
        let outcome = grade_matrix(&mut run, &assignment, &responses, backend, options, &sink);
        let (saved, _) = self.ws.update::<GradingRun, _, ServiceError>(&keys::run_key(run_id), |latest| {
            latest.merge_cells(run.cells.iter().cloned());
            latest.failures = run.failures.clone();
            latest.status = run.status;
            Ok(latest.clone())
        })?;
        let summary = outcome?;
        Ok((saved, summary))
    }

    /// Runs `execute_run` on a background thread.
    pub fn spawn_run(self: &Arc<Self>, run_id: String) -> std::thread::JoinHandle<()> {
        let service = Arc::clone(self);
        std::thread::spawn(move || {
            if let Err(e) = service.execute_run(&run_id, None) {
                log::error!("run {run_id} stopped: {e}");
            }
        })
    }

    // ---- scoring and agreement ----

    pub fn score(&self, run_id: &str) -> Result<RunScores> {
        let run = self.run_view(run_id)?;
        let assignment = self.assignment(&run.assignment_id)?;
        let scores = score_run(&run, &assignment)?;
        self.ws.put(&keys::report_key(run_id), &scores, None)?;
        let distribution = scores.distribution.clone();
        self.ws.update::<GradingRun, _, ServiceError>(&keys::run_key(run_id), |r| {
            r.distribution = Some(distribution.clone());
            Ok(())
        })?;
        Ok(scores)
    }

    pub fn reports(&self, run_id: &str) -> Result<RunScores> {
        if let Some(stored) = self.ws.get::<RunScores>(&keys::report_key(run_id))? {
            return Ok(stored.value);
        }
        let run = self.run_view(run_id)?;
        Ok(score_run(&run, &self.assignment(&run.assignment_id)?)?)
    }

    /// Labels for a run id or a grader id.
    fn labels_for(&self, assignment_id: &str, source: &str) -> Result<(LabelSet, Option<Vec<String>>)> {
        if source == "ground_truth" {
            return Ok((self.ground_truth(assignment_id)?, None));
        }
        if let Some(run) = self.ws.get::<GradingRun>(&keys::run_key(source))? {
            let run = self.run_view(&run.value.run_id)?;
            let scope = run.eval_ids.clone();
            return Ok((run.label_set(), Some(scope)));
        }
        self.label_sets(assignment_id)?
            .into_iter()
            .find(|s| s.grader_id == source)
            .map(|s| (s, None))
            .ok_or_else(|| ServiceError::NotFound(format!("no run or grader `{source}` for `{assignment_id}`")))
    }

    /// Agreement of `candidate` (a run or grader) against `reference`
    /// (`ground_truth` or a grader id).
    pub fn agree(&self, assignment_id: &str, candidate: &str, reference: &str) -> Result<AgreementReport> {
        let assignment = self.assignment(assignment_id)?;
        let (cand, scope) = self.labels_for(assignment_id, candidate)?;
        let (refr, _) = self.labels_for(assignment_id, reference)?;
        Ok(agreement::agreement_report(&cand, &refr, &assignment, scope.as_deref())?)
    }

    pub fn ablate(&self, assignment_id: &str, shot_counts: &[usize], methods: &[SelectionMethod], seed: u64, backend_name: &str) -> Result<Vec<AblationPoint>> {
        let assignment = self.assignment(assignment_id)?;
        let evaluation = self.evaluation(assignment_id)?.value;
        evaluation.ensure_all_approved()?;
        let responses = self.responses(assignment_id)?.responses;
        let feedback = self.feedback(assignment_id)?;
        let truth = self.ground_truth(assignment_id)?;
        let template = self.template(assignment_id)?;
        let backend_config = self.config.backend(backend_name)?;
        let backend = self.completion_backend(&backend_config, assignment_id)?;
        let embeddings = if methods.contains(&SelectionMethod::Clustering) {
            Some(self.embeddings(assignment_id, &responses)?.0)
        } else {
            None
        };
        let prefix = self.ws.next_run_id()?.replace("run-", "ablate-");
        let request = AblationRequest {
            assignment: &assignment,
            evaluation: &evaluation,
            responses: &responses,
            feedback: &feedback,
            ground_truth: &truth,
            template: &template,
            backend: backend_config,
            embeddings: embeddings.as_ref(),
            shot_counts: shot_counts.to_vec(),
            methods: methods.to_vec(),
            seed,
            run_prefix: prefix,
            workers: self.config.grading.workers.div_ceil(shot_counts.len() * methods.len()).max(1),
            created_at: Utc::now(),
        };
        let results = ablation_sweep(&request, backend.as_ref())?;
        let mut points = Vec::with_capacity(results.len());
        for (point, run) in results {
            self.ws.put(&keys::run_key(&run.run_id), &run, None)?;
            points.push(point);
        }
        self.ws.put(&keys::ablation_key(assignment_id), &points, None)?;
        Ok(points)
    }

    // ---- annotation ----

    pub fn annotate(&self, run_id: &str, response_id: &str, item_id: &str, flag: Relevance, annotator: &str, expected_version: Option<u64>) -> Result<GradeCell> {
        self.run(run_id)?;
        let (cell, _) = self.ws.update::<GradingRun, _, ServiceError>(&keys::run_key(run_id), |run| {
            Ok(grading::annotate_relevance(run, response_id, item_id, flag, annotator, expected_version, Utc::now())?.clone())
        })?;
        Ok(cell)
    }

    pub fn relevance(&self, run_id: &str) -> Result<RelevanceReport> {
        Ok(grading::relevance_report(&self.run(run_id)?.value))
    }

    // ---- reconciliation ----

    pub fn reconcile(&self, assignment_id: &str, grader_a: &str, grader_b: &str) -> Result<Reconciliation> {
        let sets = self.label_sets(assignment_id)?;
        let find = |id: &str| {
            sets.iter()
                .find(|s| s.grader_id == id)
                .ok_or_else(|| ServiceError::NotFound(format!("no labels from grader `{id}` for `{assignment_id}`")))
        };
        let rec = agreement::reconcile(find(grader_a)?, find(grader_b)?)?;
        self.ws.put(&keys::reconciliation_key(assignment_id), &rec, None)?;
        Ok(rec)
    }

    pub fn reconciliation(&self, assignment_id: &str) -> Result<Option<Reconciliation>> {
        Ok(self.ws.get::<Reconciliation>(&keys::reconciliation_key(assignment_id))?.map(|v| v.value))
    }

    /// Open and resolved disagreements. An assignment with exactly two
    /// grader label sets and no reconciliation yet is reconciled on first use.
    pub fn disagreements(&self, assignment_id: Option<&str>) -> Result<Vec<DisagreementView>> {
        let ids = match assignment_id {
            Some(id) => vec![id.to_string()],
            None => self.assignment_ids()?,
        };
        let mut out = Vec::new();
        for aid in ids {
            let rec = match self.reconciliation(&aid)? {
                Some(rec) => Some(rec),
                None => {
                    let graders: Vec<String> = self
                        .label_sets(&aid)?
                        .into_iter()
                        .filter(|s| s.role == LabelRole::Grader)
                        .map(|s| s.grader_id)
                        .collect();
                    match graders.as_slice() {
                        [a, b] => Some(self.reconcile(&aid, a, b)?),
                        _ => None,
                    }
                }
            };
            if let Some(rec) = rec {
                out.extend(rec.disagreements.into_iter().map(|d| DisagreementView {
                    assignment_id: aid.clone(),
                    disagreement: d,
                }));
            }
        }
        Ok(out)
    }

    pub fn resolve(&self, assignment_id: Option<&str>, disagreement_id: &str, label: Grade, resolver: &str, expected_version: Option<u64>) -> Result<DisagreementView> {
        let aid = match assignment_id {
            Some(a) => a.to_string(),
            None => {
                let owners: Vec<String> = self
                    .disagreements(None)?
                    .into_iter()
                    .filter(|d| d.disagreement.id == disagreement_id)
                    .map(|d| d.assignment_id)
                    .collect();
                match owners.as_slice() {
                    [one] => one.clone(),
                    [] => return Err(ServiceError::NotFound(format!("unknown disagreement `{disagreement_id}`"))),
                    _ => return Err(ServiceError::Validation(format!("disagreement `{disagreement_id}` is ambiguous; name the assignment"))),
                }
            }
        };
        let key = keys::reconciliation_key(&aid);
        if self.ws.get::<Reconciliation>(&key)?.is_none() {
            return Err(ServiceError::NotFound(format!("no reconciliation for `{aid}`")));
        }
        let (d, _) = self.ws.update::<Reconciliation, _, ServiceError>(&key, |rec| Ok(rec.resolve(disagreement_id, label, resolver, expected_version)?.clone()))?;
        Ok(DisagreementView {
            assignment_id: aid,
            disagreement: d,
        })
    }

    /// Per-status counts, for dashboards.
    pub fn run_summaries(&self) -> Result<Vec<BTreeMap<&'static str, serde_json::Value>>> {
        self.run_ids()?
            .iter()
            .map(|id| {
                let run = self.run_view(id)?;
                let p = run.progress();
                Ok(BTreeMap::from([
                    ("run_id", serde_json::json!(run.run_id)),
                    ("assignment_id", serde_json::json!(run.assignment_id)),
                    ("status", serde_json::json!(run.status)),
                    ("graded", serde_json::json!(p.graded)),
                    ("total", serde_json::json!(p.total)),
                ]))
            })
            .collect()
    }
}

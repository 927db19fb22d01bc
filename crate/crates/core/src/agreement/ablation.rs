use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{agreement_report, AgreementError, Result};
use crate::gateway::{BackendConfig, CompletionBackend};
use crate::grading::{grade_matrix, GradeOptions, GradingError, GradingRun, PromptTemplate};
use crate::model::{Assignment, LabelSet, StudentResponse};
use crate::rrag::EvaluationSet;
use crate::shots::{random_shots, select_shots, EmbeddingMatrix, FeedbackBook, KMeansParams, SelectionMethod, ShotSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub method: SelectionMethod,
    pub shots: usize,
    pub kappa: f64,
    pub raw: f64,
    pub n_pairs: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub run_id: String,
}

pub struct AblationRequest<'a> {
    pub assignment: &'a Assignment,
    pub evaluation: &'a EvaluationSet,
    pub responses: &'a [StudentResponse],
    pub feedback: &'a FeedbackBook,
    pub ground_truth: &'a LabelSet,
    pub template: &'a PromptTemplate,
    pub backend: BackendConfig,
    /// Required when `methods` includes clustering.
    pub embeddings: Option<&'a EmbeddingMatrix>,
    pub shot_counts: Vec<usize>,
    pub methods: Vec<SelectionMethod>,
    pub seed: u64,
    pub run_prefix: String,
    /// Grading workers per run.
    pub workers: usize,
    pub created_at: DateTime<Utc>,
}

impl AblationRequest<'_> {
    fn shot_set(&self, method: SelectionMethod, shots: usize) -> Result<ShotSet> {
        let mut set = match method {
            _ if shots == 0 => ShotSet::zero_shot(self.responses),
            SelectionMethod::Random => random_shots(self.responses, shots, self.seed)?,
            SelectionMethod::Clustering => {
                let matrix = self
                    .embeddings
                    .ok_or_else(|| AgreementError::InvalidRequest("clustering needs response embeddings".into()))?;
                let (set, _) = select_shots(self.responses, matrix, &KMeansParams::new(shots, self.seed))?;
                set
            }
        };
        set.method = method;
        set.attach_feedback(self.feedback);
        Ok(set)
    }

    fn run_one(&self, method: SelectionMethod, shots: usize, backend: &dyn CompletionBackend) -> Result<(AblationPoint, GradingRun)> {
        let shot_set = self.shot_set(method, shots)?;
        let run_id = format!("{}-{method}-{shots}", self.run_prefix);
        let mut run = GradingRun::new(&run_id, self.assignment, self.evaluation, shot_set, self.backend.clone(), self.template.clone(), self.created_at)?;
        grade_matrix(&mut run, self.assignment, self.responses, backend, GradeOptions { workers: self.workers }, &|_| Ok(()))?;
        if !run.is_complete() {
            let detail = run.failures.first().map(|f| f.message.clone()).unwrap_or_default();
            return Err(GradingError::Precondition(format!("run {run_id} did not complete: {detail}")).into());
        }
        let report = agreement_report(&run.label_set(), self.ground_truth, self.assignment, Some(&run.eval_ids))?;
        let point = AblationPoint {
            method,
            shots,
            kappa: report.kappa,
            raw: report.raw,
            n_pairs: report.n_pairs,
            run_id,
        };
        Ok((point, run))
    }
}

/// Grades one run per (method, shot count) and measures agreement with the
/// ground truth over that run's evaluation partition. Runs execute
/// concurrently; results come back in (method, shots) request order.
pub fn ablation_sweep(request: &AblationRequest<'_>, backend: &dyn CompletionBackend) -> Result<Vec<(AblationPoint, GradingRun)>> {
    if request.methods.is_empty() || request.shot_counts.is_empty() {
        return Err(AgreementError::InvalidRequest("need at least one method and one shot count".into()));
    }
    let combos: Vec<(SelectionMethod, usize)> = request
        .methods
        .iter()
        .flat_map(|m| request.shot_counts.iter().map(move |s| (*m, *s)))
        .collect();
    let results: Vec<Result<(AblationPoint, GradingRun)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = combos
            .iter()
            .map(|(m, s)| scope.spawn(move || request.run_one(*m, *s, backend)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation thread panicked")).collect()
    });
    results.into_iter().collect()
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    method: SelectionMethod,
    shots: usize,
    kappa: f64,
    raw: f64,
    n_pairs: usize,
}

/// Columns: method,shots,kappa,raw,n_pairs.
pub fn write_ablation_csv(points: &[AblationPoint], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for p in points {
        writer.serialize(CsvRow {
            method: p.method,
            shots: p.shots,
            kappa: p.kappa,
            raw: p.raw,
            n_pairs: p.n_pairs,
        })?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ablation_csv(input: impl Read) -> Result<Vec<AblationPoint>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(AblationPoint {
                method: row.method,
                shots: row.shots,
                kappa: row.kappa,
                raw: row.raw,
                n_pairs: row.n_pairs,
                run_id: String::new(),
            })
        })
        .collect()
}

//! Few-shot exemplar selection.
//!
//! Responses are embedded, clustered with k-means (one cluster per shot), and
//! the response nearest each centroid becomes an exemplar. The remaining
//! responses form the evaluation partition. A seeded random selection is
//! kept alongside for comparison runs.

mod kmeans;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans, squared_distance, KMeansFit, KMeansParams};

use crate::gateway::{l2_normalize, EmbeddingBackend, GatewayError};
use crate::model::{from_json_str, Grade, IngestError, StudentResponse};

#[derive(Debug, Error)]
pub enum ShotError {
    #[error("no vectors to cluster")]
    EmptyInput,
    #[error("shot count {k} is invalid for {n} responses")]
    InvalidK { k: usize, n: usize },
    #[error("vectors do not share one positive dimension")]
    RaggedVectors,
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("embedding for `{0}` is the zero vector")]
    ZeroVector(String),
    #[error("embedding matrix ids do not match the response corpus")]
    IdMismatch,
    #[error("shot `{shot_id}` has no exemplar feedback for item `{item_id}`")]
    MissingFeedback { shot_id: String, item_id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub type Result<T, E = ShotError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    response_ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    dimension: usize,
    normalized: bool,
}

const NORM_TOLERANCE: f64 = 1e-9;

impl EmbeddingMatrix {
    pub fn new(response_ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if response_ids.len() != vectors.len() || vectors.is_empty() {
            return Err(ShotError::RaggedVectors);
        }
        let dimension = vectors[0].len();
        if dimension == 0 || vectors.iter().any(|v| v.len() != dimension) {
            return Err(ShotError::RaggedVectors);
        }
        let normalized = vectors
            .iter()
            .all(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= NORM_TOLERANCE);
        Ok(EmbeddingMatrix {
            response_ids,
            vectors,
            dimension,
            normalized,
        })
    }

    pub fn response_ids(&self) -> &[String] {
        &self.response_ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Embedding cache format: one `{response_id, vector}` object per line.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            response_id: &'a str,
            vector: &'a [f64],
        }
        self.response_ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| serde_json::to_string(&Row { response_id: id, vector: v }).expect("row serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            response_id: String,
            vector: Vec<f64>,
        }
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(IngestError::from)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = from_json_str(&line, Some(n + 1))?;
            ids.push(row.response_id);
            vectors.push(row.vector);
        }
        Self::new(ids, vectors)
    }
}

const EMBED_BATCH: usize = 64;
const EMBED_PARALLELISM: usize = 4;

/// Embeds every response (batched, a few batches in flight) and L2-normalizes the vectors.
pub fn embed_responses(responses: &[StudentResponse], backend: &dyn EmbeddingBackend) -> Result<EmbeddingMatrix> {
    if responses.is_empty() {
        return Err(ShotError::EmptyInput);
    }
    let expected = backend.dimension();
    let batches: Vec<&[StudentResponse]> = responses.chunks(EMBED_BATCH).collect();
    let mut vectors = Vec::with_capacity(responses.len());
    for wave in batches.chunks(EMBED_PARALLELISM) {
        let results: Vec<crate::gateway::Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    scope.spawn(move || {
                        let texts: Vec<&str> = batch.iter().map(|r| r.text.as_str()).collect();
                        backend.embed(&texts)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("embedding thread panicked")).collect()
        });
        for result in results {
            vectors.extend(result?);
        }
    }
    if vectors.len() != responses.len() {
        return Err(GatewayError::Malformed(format!("{} vectors for {} responses", vectors.len(), responses.len())).into());
    }
    for (v, r) in vectors.iter_mut().zip(responses) {
        if v.len() != expected {
            return Err(GatewayError::DimensionMismatch { expected, got: v.len() }.into());
        }
        if !l2_normalize(v) {
            return Err(ShotError::ZeroVector(r.id.clone()));
        }
    }
    EmbeddingMatrix::new(responses.iter().map(|r| r.id.clone()).collect(), vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Clustering,
    Random,
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMethod::Clustering => "clustering",
            SelectionMethod::Random => "random",
        })
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "clustering" => Ok(SelectionMethod::Clustering),
            "random" => Ok(SelectionMethod::Random),
            other => Err(format!("unknown selection method `{other}`")),
        }
    }
}

/// Human-written grade and feedback for one shot on one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotFeedback {
    pub grade: Grade,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub method: SelectionMethod,
    pub k: usize,
    pub seed: u64,
    pub shot_ids: Vec<String>,
    pub eval_ids: Vec<String>,
    /// shot id → item id → exemplar feedback.
    #[serde(default)]
    pub shot_feedback: BTreeMap<String, BTreeMap<String, ShotFeedback>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_backend: Option<String>,
}

impl ShotSet {
    /// Zero-shot partition: everything is evaluated.
    pub fn zero_shot(responses: &[StudentResponse]) -> Self {
        ShotSet {
            method: SelectionMethod::Random,
            k: 0,
            seed: 0,
            shot_ids: Vec::new(),
            eval_ids: responses.iter().map(|r| r.id.clone()).collect(),
            shot_feedback: BTreeMap::new(),
            embedding_backend: None,
        }
    }

    fn partition(method: SelectionMethod, seed: u64, responses: &[StudentResponse], shot_ids: Vec<String>) -> Self {
        let chosen: HashSet<&str> = shot_ids.iter().map(String::as_str).collect();
        let eval_ids = responses
            .iter()
            .filter(|r| !chosen.contains(r.id.as_str()))
            .map(|r| r.id.clone())
            .collect();
        ShotSet {
            method,
            k: shot_ids.len(),
            seed,
            shot_ids,
            eval_ids,
            shot_feedback: BTreeMap::new(),
            embedding_backend: None,
        }
    }

    /// Copies exemplar feedback for the chosen shots out of `book`.
    pub fn attach_feedback(&mut self, book: &FeedbackBook) {
        for shot in &self.shot_ids {
            if let Some(per_item) = book.0.get(shot) {
                self.shot_feedback.insert(shot.clone(), per_item.clone());
            }
        }
    }

    /// Every shot must carry feedback for every item before few-shot grading.
    pub fn ensure_feedback<'a>(&self, item_ids: impl IntoIterator<Item = &'a str> + Clone) -> Result<()> {
        for shot in &self.shot_ids {
            for item in item_ids.clone() {
                let present = self
                    .shot_feedback
                    .get(shot)
                    .and_then(|m| m.get(item))
                    .is_some_and(|f| !f.feedback.trim().is_empty());
                if !present {
                    return Err(ShotError::MissingFeedback {
                        shot_id: shot.clone(),
                        item_id: item.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_partition_of(&self, responses: &[StudentResponse]) -> bool {
        let shots: BTreeSet<&str> = self.shot_ids.iter().map(String::as_str).collect();
        let eval: BTreeSet<&str> = self.eval_ids.iter().map(String::as_str).collect();
        let all: BTreeSet<&str> = responses.iter().map(|r| r.id.as_str()).collect();
        shots.len() == self.shot_ids.len()
            && shots.is_disjoint(&eval)
            && shots.union(&eval).copied().collect::<BTreeSet<_>>() == all
            && self.shot_ids.len() == self.k
    }
}

/// Exemplar feedback rows keyed by response id then item id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackBook(pub BTreeMap<String, BTreeMap<String, ShotFeedback>>);

impl FeedbackBook {
    /// Reads JSONL rows of `{response_id, item_id, grade, feedback}`.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            response_id: String,
            item_id: String,
            grade: Grade,
            feedback: String,
        }
        let mut book = FeedbackBook::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(IngestError::from)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = from_json_str(&line, Some(n + 1))?;
            book.0.entry(row.response_id).or_default().insert(
                row.item_id,
                ShotFeedback {
                    grade: row.grade,
                    feedback: row.feedback,
                },
            );
        }
        Ok(book)
    }
}

fn check_ids(responses: &[StudentResponse], matrix: &EmbeddingMatrix) -> Result<()> {
    let a: BTreeSet<&str> = responses.iter().map(|r| r.id.as_str()).collect();
    let b: BTreeSet<&str> = matrix.response_ids.iter().map(String::as_str).collect();
    if a != b || a.len() != matrix.len() {
        return Err(ShotError::IdMismatch);
    }
    Ok(())
}

/// Picks, for each centroid in order, the nearest response not already chosen
/// (ties go to the lexicographically smallest id).
pub fn select_shots(responses: &[StudentResponse], matrix: &EmbeddingMatrix, params: &KMeansParams) -> Result<(ShotSet, KMeansFit)> {
    check_ids(responses, matrix)?;
    if params.k == 0 || params.k >= responses.len() {
        return Err(ShotError::InvalidK {
            k: params.k,
            n: responses.len(),
        });
    }
    let fit = kmeans(matrix.vectors(), params)?;
    let mut chosen: HashSet<usize> = HashSet::new();
    let mut shot_ids = Vec::with_capacity(params.k);
    for centroid in &fit.centroids {
        let best = matrix
            .vectors()
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, v)| (squared_distance(v, centroid), &matrix.response_ids[i], i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
            .expect("k < n leaves a candidate");
        chosen.insert(best.2);
        shot_ids.push(best.1.clone());
    }
    let set = ShotSet::partition(SelectionMethod::Clustering, params.seed, responses, shot_ids);
    Ok((set, fit))
}

/// Draws `k` distinct responses with a seeded generator.
pub fn random_shots(responses: &[StudentResponse], k: usize, seed: u64) -> Result<ShotSet> {
    if k >= responses.len() && !(k == 0 && responses.is_empty()) {
        return Err(ShotError::InvalidK { k, n: responses.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, responses.len(), k);
    let shot_ids = picks.iter().map(|i| responses[i].id.clone()).collect();
    Ok(ShotSet::partition(SelectionMethod::Random, seed, responses, shot_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::TestEmbedding;

    fn corpus(n: usize) -> Vec<StudentResponse> {
        (0..n)
            .map(|i| StudentResponse {
                id: format!("s{i:03}"),
                text: format!("answer number {i} mentions {}", ["oxygen", "carbon", "bonds"][i % 3]),
            })
            .collect()
    }

    fn hand_example() -> (Vec<StudentResponse>, EmbeddingMatrix) {
        let responses: Vec<StudentResponse> = (1..=4)
            .map(|i| StudentResponse {
                id: format!("r{i}"),
                text: "x".into(),
            })
            .collect();
        let matrix = EmbeddingMatrix::new(
            responses.iter().map(|r| r.id.clone()).collect(),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]],
        )
        .unwrap();
        (responses, matrix)
    }

    // Each pair sits 0.5 from its centroid; the tie goes to the lower id.
    #[test]
    fn hand_example_picks_r1_and_r3() {
        let (responses, matrix) = hand_example();
        for seed in 0..8 {
            let (set, _) = select_shots(&responses, &matrix, &KMeansParams::new(2, seed)).unwrap();
            let shots: BTreeSet<&str> = set.shot_ids.iter().map(String::as_str).collect();
            assert_eq!(shots, BTreeSet::from(["r1", "r3"]));
            let eval: Vec<&str> = set.eval_ids.iter().map(String::as_str).collect();
            assert_eq!(eval, ["r2", "r4"]);
        }
    }

    #[test]
    fn single_shot_is_nearest_to_mean() {
        let responses = corpus(12);
        let matrix = embed_responses(&responses, &TestEmbedding::new(32)).unwrap();
        let (set, fit) = select_shots(&responses, &matrix, &KMeansParams::new(1, 4)).unwrap();
        let mean = &fit.centroids[0];
        let best = matrix
            .vectors()
            .iter()
            .zip(matrix.response_ids())
            .min_by(|a, b| squared_distance(a.0, mean).total_cmp(&squared_distance(b.0, mean)).then(a.1.cmp(b.1)))
            .unwrap();
        assert_eq!(set.shot_ids, vec![best.1.to_string()]);
    }

    #[test]
    fn clustering_partition_sizes() {
        let responses = corpus(175);
        let matrix = embed_responses(&responses, &TestEmbedding::new(64)).unwrap();
        assert!(matrix.is_normalized());
        let (set, _) = select_shots(&responses, &matrix, &KMeansParams::new(6, 0)).unwrap();
        assert_eq!(set.eval_ids.len(), 169);
        assert!(set.is_partition_of(&responses));
        assert!(select_shots(&responses[..3], &embed_responses(&responses[..3], &TestEmbedding::new(8)).unwrap(), &KMeansParams::new(3, 0)).is_err());
    }

    #[test]
    fn random_selection() {
        let responses = corpus(175);
        let a = random_shots(&responses, 4, 11).unwrap();
        let b = random_shots(&responses, 4, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.eval_ids.len(), 171);
        assert!(a.is_partition_of(&responses));
        let zero = random_shots(&responses, 0, 1).unwrap();
        assert!(zero.shot_ids.is_empty());
        assert_eq!(zero.eval_ids.len(), 175);
        assert!(matches!(random_shots(&responses[..3], 3, 0), Err(ShotError::InvalidK { .. })));
    }

    #[test]
    fn embedding_shapes() {
        let responses = corpus(175);
        let backend = TestEmbedding::new(384);
        let matrix = embed_responses(&responses, &backend).unwrap();
        assert_eq!(matrix.len(), 175);
        assert_eq!(matrix.dimension(), 384);
        assert_eq!(matrix.response_ids()[7], responses[7].id);
        let one = embed_responses(&responses[..1], &backend).unwrap();
        let norm: f64 = one.vectors()[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(embed_responses(&responses, &backend).unwrap(), matrix);
        assert!(embed_responses(&[], &backend).is_err());
    }

    struct WrongDimension;
    impl EmbeddingBackend for WrongDimension {
        fn backend_id(&self) -> String {
            "wrong".into()
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed(&self, texts: &[&str]) -> crate::gateway::Result<Vec<Vec<f64>>> {
            Ok(texts.iter().map(|_| vec![1.0; 3]).collect())
        }
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let err = embed_responses(&corpus(3), &WrongDimension).unwrap_err();
        assert!(matches!(err, ShotError::Gateway(GatewayError::DimensionMismatch { expected: 4, got: 3 })));
    }

    #[test]
    fn cache_round_trip() {
        let responses = corpus(5);
        let matrix = embed_responses(&responses, &TestEmbedding::new(16)).unwrap();
        let back = EmbeddingMatrix::from_jsonl(matrix.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, matrix);
    }

    #[test]
    fn feedback_requirement() {
        let responses = corpus(6);
        let mut set = random_shots(&responses, 2, 3).unwrap();
        assert!(set.ensure_feedback(["q1"]).is_err());
        let mut rows = String::new();
        for r in &responses {
            rows.push_str(&format!("{{\"response_id\":\"{}\",\"item_id\":\"q1\",\"grade\":1,\"feedback\":\"ok\"}}\n", r.id));
        }
        set.attach_feedback(&FeedbackBook::from_jsonl(rows.as_bytes()).unwrap());
        set.ensure_feedback(["q1"]).unwrap();
        assert!(matches!(set.ensure_feedback(["q1", "q2"]), Err(ShotError::MissingFeedback { .. })));
        assert_eq!(set.shot_feedback.len(), 2);
    }
}

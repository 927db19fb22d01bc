//! Checks shared by the acceptance target and the focused test files.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use qagrade::agreement::{cohen_kappa, read_ablation_csv};
use qagrade::fixture;
use qagrade::gateway::TestEmbedding;
use qagrade::grading::{build_prompt, check_slot_presence, exemplars, parse_grade, PromptTemplate, SlotValues};
use qagrade::model::{Assignment, Grade, RubricPoint, StudentResponse, Weight};
use qagrade::scoring::{consolidate, ItemGrade};
use qagrade::shots::{embed_responses, kmeans, random_shots, select_shots, EmbeddingMatrix, KMeansParams, ShotSet};
use qagrade::workspace::Workspace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs `f` and fails it when it exceeds `limit`.
pub fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure!(took <= limit, "took {took:.2?}, limit {limit:?}");
    Ok(format!("{detail} in {took:.2?}"))
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

// ---- kappa ----

/// κ straight from the definition, in floating point.
pub fn kappa_by_definition(a: &[u8], b: &[u8]) -> Option<f64> {
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let ones_a = a.iter().filter(|&&x| x == 1).count() as f64 / n;
    let ones_b = b.iter().filter(|&&x| x == 1).count() as f64 / n;
    let p_e = ones_a * ones_b + (1.0 - ones_a) * (1.0 - ones_b);
    if (1.0 - p_e).abs() < 1e-15 {
        return None;
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

fn bits(v: u32, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((v >> i) & 1) as u8).collect()
}

fn grades(v: &[u8]) -> Vec<Grade> {
    v.iter().map(|&x| Grade::from(x == 1)).collect()
}

pub fn kappa_exhaustive() -> Check {
    let mut compared = 0;
    let mut degenerate = 0;
    for x in 0..16u32 {
        for y in 0..16u32 {
            let (a, b) = (bits(x, 4), bits(y, 4));
            let pairs: Vec<(Grade, Grade)> = grades(&a).into_iter().zip(grades(&b)).collect();
            let swapped: Vec<(Grade, Grade)> = pairs.iter().map(|&(p, q)| (q, p)).collect();
            let k = cohen_kappa(&pairs).map_err(|e| e.to_string())?;
            let ks = cohen_kappa(&swapped).map_err(|e| e.to_string())?;
            ensure!(k.kappa == ks.kappa, "asymmetric for {a:?} {b:?}: {} vs {}", k.kappa, ks.kappa);
            ensure!((-1.0..=1.0).contains(&k.kappa), "out of bounds for {a:?} {b:?}: {}", k.kappa);
            match kappa_by_definition(&a, &b) {
                Some(expected) => {
                    ensure!(!k.degenerate, "{a:?} {b:?} flagged degenerate");
                    ensure!((k.kappa - expected).abs() <= 1e-12, "{a:?} {b:?}: {} vs {expected}", k.kappa);
                    compared += 1;
                }
                None => {
                    ensure!(k.degenerate, "{a:?} {b:?} should be degenerate");
                    ensure!(k.kappa == if a == b { 1.0 } else { 0.0 }, "degenerate {a:?} {b:?}: {}", k.kappa);
                    degenerate += 1;
                }
            }
            if a == b && k.p_e < 1.0 {
                ensure!(k.kappa == 1.0, "identical {a:?} gives {}", k.kappa);
            }
        }
    }
    Ok(format!("{compared} pairs within 1e-12, {degenerate} degenerate"))
}

// ---- k-means ----

pub struct Blobs {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub radius: f64,
    pub separation: f64,
}

/// Three blobs of points within `radius` of centers at least `20 * radius` apart.
pub fn blobs(seed: u64) -> Blobs {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let dim = 2 + (seed as usize % 3);
    let radius = 1.0;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < 3 {
        let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-100.0..100.0)).collect();
        if centers.iter().all(|o| dist(o, &c) >= 25.0 * radius) {
            centers.push(c);
        }
    }
    let separation = (0..3)
        .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
        .map(|(i, j)| dist(&centers[i], &centers[j]))
        .fold(f64::INFINITY, f64::min);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        let count = 15 + 5 * label + seed as usize;
        for _ in 0..count {
            let offset: Vec<f64> = loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
                    break v;
                }
            };
            points.push(c.iter().zip(&offset).map(|(a, b)| a + b).collect());
            labels.push(label);
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    Blobs {
        points: order.iter().map(|&i| points[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        radius,
        separation,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter().zip(b).all(|(x, y)| *map.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

pub fn kmeans_recovery() -> Check {
    let mut iterations = Vec::new();
    for seed in 0..5u64 {
        let data = blobs(seed);
        ensure!(data.separation >= 20.0 * data.radius, "seed {seed}: blobs too close");
        let fit = kmeans(&data.points, &KMeansParams::new(3, seed)).map_err(|e| e.to_string())?;
        ensure!(same_partition(&fit.assignments, &data.labels), "seed {seed}: planted partition not recovered");
        for w in fit.inertia_history.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: inertia rose from {} to {}", w[0], w[1]);
        }
        iterations.push(fit.iterations);
    }
    Ok(format!("5/5 seeds recovered (iterations {iterations:?})"))
}

// ---- shot selection ----

pub fn fixture_embeddings(responses: &[StudentResponse]) -> EmbeddingMatrix {
    embed_responses(responses, &TestEmbedding::new(384)).expect("test embedding never fails")
}

pub fn hand_example() -> (Vec<StudentResponse>, EmbeddingMatrix) {
    let responses: Vec<StudentResponse> = (1..=4)
        .map(|i| StudentResponse {
            id: format!("r{i}"),
            text: format!("response {i}"),
        })
        .collect();
    let matrix = EmbeddingMatrix::new(
        responses.iter().map(|r| r.id.clone()).collect(),
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]],
    )
    .expect("valid matrix");
    (responses, matrix)
}

fn check_partition(set: &ShotSet, responses: &[StudentResponse], k: usize, label: &str) -> Result<(), String> {
    let all: BTreeSet<&str> = responses.iter().map(|r| r.id.as_str()).collect();
    let shots: BTreeSet<&str> = set.shot_ids.iter().map(String::as_str).collect();
    let eval: BTreeSet<&str> = set.eval_ids.iter().map(String::as_str).collect();
    ensure!(shots.len() == k && set.shot_ids.len() == k, "{label}: {} shots", set.shot_ids.len());
    ensure!(eval.len() == responses.len() - k && set.eval_ids.len() == eval.len(), "{label}: |eval| = {}", set.eval_ids.len());
    ensure!(shots.is_disjoint(&eval), "{label}: shots overlap eval");
    ensure!(shots.union(&eval).copied().collect::<BTreeSet<_>>() == all, "{label}: not a partition");
    ensure!(set.is_partition_of(responses), "{label}: is_partition_of disagrees");
    Ok(())
}

pub fn shot_contract() -> Check {
    let responses = fixture::responses().responses;
    ensure!(responses.len() == 40, "fixture has {} responses", responses.len());
    let matrix = fixture_embeddings(&responses);
    let mut picked = Vec::new();
    for k in [1usize, 2, 4, 6] {
        for seed in 0..3u64 {
            let (set, _) = select_shots(&responses, &matrix, &KMeansParams::new(k, seed)).map_err(|e| e.to_string())?;
            check_partition(&set, &responses, k, &format!("clustering k={k} seed={seed}"))?;
            let (again, _) = select_shots(&responses, &matrix, &KMeansParams::new(k, seed)).map_err(|e| e.to_string())?;
            ensure!(set == again, "clustering k={k} seed={seed} not deterministic");
            let random = random_shots(&responses, k, seed).map_err(|e| e.to_string())?;
            check_partition(&random, &responses, k, &format!("random k={k} seed={seed}"))?;
            ensure!(random == random_shots(&responses, k, seed).map_err(|e| e.to_string())?, "random k={k} seed={seed} not deterministic");
            if seed == 0 {
                picked.push(format!("k={k}:{}", set.shot_ids.join("/")));
            }
        }
    }
    let (hand, hand_matrix) = hand_example();
    let (set, _) = select_shots(&hand, &hand_matrix, &KMeansParams::new(2, 0)).map_err(|e| e.to_string())?;
    let shots: BTreeSet<&str> = set.shot_ids.iter().map(String::as_str).collect();
    ensure!(shots == BTreeSet::from(["r1", "r3"]), "hand example picked {shots:?}");
    Ok("k in {1,2,4,6} x 3 seeds partition the corpus, hand example {r1, r3}".to_string())
}

// ---- prompts ----

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests").join("golden")
}

pub fn fixture_template() -> PromptTemplate {
    PromptTemplate::with_default_layout(fixture::GENERAL_INSTRUCTION.trim_end())
}

/// The 4-shot set used for golden prompts: clustering, k = 4, seed 0.
pub fn four_shot_set(responses: &[StudentResponse]) -> ShotSet {
    let (mut set, _) = select_shots(responses, &fixture_embeddings(responses), &KMeansParams::new(4, 0)).expect("selection succeeds");
    set.attach_feedback(&fixture::feedback());
    set
}

/// (file name, rendered prompt) for both shot settings and every item, on
/// the first fixture response.
pub fn golden_prompts() -> Vec<(String, String)> {
    let assignment = fixture::assignment();
    let responses = fixture::responses().responses;
    let evaluation = fixture::approved_evaluation();
    let template = fixture_template();
    let student = &responses[0];
    let sets = [("0shot", ShotSet::zero_shot(&responses)), ("4shot", four_shot_set(&responses))];
    let mut out = Vec::new();
    for (label, set) in &sets {
        for item in &evaluation.items {
            let shots = exemplars(set, &item.item_id, &responses).expect("feedback attached");
            let prompt = build_prompt(&template, &assignment, item, &shots, &student.text).expect("prompt renders");
            out.push((format!("{label}_{}.txt", item.item_id), prompt));
        }
    }
    out
}

pub fn golden_files_match() -> Check {
    let dir = golden_dir();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let prompts = golden_prompts();
    for (name, prompt) in &prompts {
        let path = dir.join(name);
        if update {
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            std::fs::write(&path, prompt).map_err(|e| e.to_string())?;
            continue;
        }
        let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
        ensure!(&expected == prompt, "{name} differs from golden file");
    }
    Ok(format!("{} prompts byte-identical", prompts.len()))
}

pub fn slot_presence_all_cells() -> Check {
    let assignment = fixture::assignment();
    let responses = fixture::responses().responses;
    let evaluation = fixture::approved_evaluation();
    let template = fixture_template();
    let sets = [ShotSet::zero_shot(&responses), four_shot_set(&responses)];
    let mut cells = 0;
    for set in &sets {
        for r in &responses {
            for item in &evaluation.items {
                let shots = exemplars(set, &item.item_id, &responses).map_err(|e| e.to_string())?;
                let values = SlotValues::for_cell(&template, &assignment, item, &shots, &r.text).map_err(|e| e.to_string())?;
                check_slot_presence(&template, &values).map_err(|e| format!("{}:{}: {e}", r.id, item.item_id))?;
                cells += 1;
            }
        }
    }
    ensure!(cells == 2 * 160, "checked {cells} prompts");
    Ok("160 cells x 2 shot settings".to_string())
}

// ---- parser ----

#[derive(serde::Deserialize)]
pub struct Transcript {
    pub response_id: String,
    pub item: String,
    pub transcript: String,
    pub grade: u8,
}

pub fn transcripts() -> Vec<Transcript> {
    let text = std::fs::read_to_string(manifest_dir().join("tests/data/transcripts.jsonl")).expect("transcript data");
    text.lines().map(|l| serde_json::from_str(l).expect("transcript row")).collect()
}

pub fn parser_fidelity() -> Check {
    let rows = transcripts();
    ensure!(rows.len() == 12, "{} transcripts", rows.len());
    let mut by_response: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for row in &rows {
        let parsed = parse_grade(&row.transcript).map_err(|e| format!("{} {}: {e}", row.response_id, row.item))?;
        ensure!(parsed.grade.as_u8() == row.grade, "{} {}: parsed {} expected {}", row.response_id, row.item, parsed.grade, row.grade);
        ensure!(!parsed.justification.is_empty(), "{} {}: empty justification", row.response_id, row.item);
        by_response.entry(&row.response_id).or_default().push(parsed.grade.as_u8());
    }
    let expected = BTreeMap::from([("9328790", vec![0, 0, 1, 0]), ("9328795", vec![1, 1, 1, 0]), ("9328809", vec![1, 0, 0, 1])]);
    ensure!(by_response == expected, "grades {by_response:?}");
    Ok("12/12 transcripts".to_string())
}

// ---- scoring properties ----

fn assignment_with(weights: &[Weight]) -> Assignment {
    Assignment {
        id: "prop".into(),
        problem_text: "problem".into(),
        reference_answer: "reference".into(),
        rubric: weights
            .iter()
            .enumerate()
            .map(|(i, &weight)| RubricPoint {
                id: format!("p{i}"),
                text: format!("point {i}"),
                weight,
            })
            .collect(),
    }
}

fn item_grades(grades: &[bool]) -> Vec<ItemGrade> {
    grades
        .iter()
        .enumerate()
        .map(|(i, &g)| ItemGrade::new(format!("q{}", i + 1), Grade::from(g), format!("because {i}")))
        .collect()
}

fn score_of(assignment: &Assignment, grades: &[bool]) -> Weight {
    consolidate("r", &item_grades(grades), assignment).expect("complete grades").final_score
}

pub fn scoring_strategy() -> impl Strategy<Value = (Vec<Weight>, Vec<bool>, Vec<bool>, usize, u64)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec((0i64..12, 1i64..5).prop_map(|(a, b)| Weight::new(a, b)), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            0..n,
            any::<u64>(),
        )
    })
}

pub fn scoring_case(weights: &[Weight], grades: &[bool], raise: &[bool], flip: usize, shuffle_seed: u64) -> Result<(), TestCaseError> {
    let assignment = assignment_with(weights);
    let report = consolidate("r", &item_grades(grades), &assignment).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let oracle: Weight = weights.iter().zip(grades).filter(|(_, &g)| g).map(|(&w, _)| w).sum();
    prop_assert_eq!(report.final_score, oracle);
    prop_assert!(report.final_score >= Weight::ZERO && report.final_score <= assignment.max_score());
    let feedback_tail = format!("Final score: {} / {}", report.final_score, assignment.max_score());
    prop_assert!(report.unified_feedback.ends_with(&feedback_tail), "{}", report.unified_feedback);

    // flipping one grade moves the score by exactly that item's weight
    let mut flipped = grades.to_vec();
    flipped[flip] = !flipped[flip];
    let after = score_of(&assignment, &flipped);
    if grades[flip] {
        prop_assert_eq!(after + weights[flip], report.final_score);
    } else {
        prop_assert_eq!(after, report.final_score + weights[flip]);
    }

    // raising grades never lowers the score
    let raised: Vec<bool> = grades.iter().zip(raise).map(|(&g, &r)| g || r).collect();
    prop_assert!(score_of(&assignment, &raised) >= report.final_score);

    // input order does not matter
    let mut shuffled = item_grades(grades);
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let again = consolidate("r", &shuffled, &assignment).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&again, &report);
    Ok(())
}

pub fn scoring_properties(cases: u32) -> Check {
    let mut runner = TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&scoring_strategy(), |(w, g, r, f, s)| scoring_case(&w, &g, &r, f, s))
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} randomized cases (flip, monotonicity, permutation, bounds)"))
}

// ---- CLI pipelines ----

pub struct CliSession {
    pub dir: tempfile::TempDir,
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutput {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.stdout))
    }
}

impl CliSession {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        fixture::write_to(&dir.path().join("fx")).expect("fixture written");
        CliSession { dir }
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    pub fn fx(&self, name: &str) -> String {
        self.path(&format!("fx/{name}"))
    }

    pub fn workspace(&self) -> PathBuf {
        self.dir.path().join("ws")
    }

    pub fn run(&self, args: &[&str]) -> CliOutput {
        let out = Command::new(env!("CARGO_BIN_EXE_qagrade"))
            .current_dir(self.dir.path())
            .arg("--workspace")
            .arg(self.workspace())
            .args(args)
            .output()
            .expect("binary runs");
        CliOutput {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    /// Runs a step that must succeed, returning its JSON output.
    pub fn step(&self, args: &[&str]) -> Result<Value, String> {
        let mut full = vec!["--format", "json"];
        full.extend_from_slice(args);
        let out = self.run(&full);
        ensure!(out.code == 0, "`{}` exited {}: {}", args.join(" "), out.code, out.stderr.trim());
        serde_json::from_str(&out.stdout).map_err(|e| format!("`{}` printed non-JSON ({e})", args.join(" ")))
    }

    /// ingest, scripted questions and approval of every item.
    pub fn prepare(&self) -> Result<(), String> {
        self.step(&[
            "ingest",
            "--assignment", &self.fx("assignment.json"),
            "--responses", &self.fx("responses.jsonl"),
            "--labels", &self.fx("labels.jsonl"),
            "--feedback", &self.fx("feedback.jsonl"),
            "--oracle-rules", &self.fx("oracle_rules.json"),
            "--instruction", &self.fx("general_instruction.txt"),
        ])?;
        self.step(&["gen-questions", "--backend", "scripted", "--candidates", "3", "--questions", &self.fx("questions.json")])?;
        for item in ["q1", "q2", "q3", "q4"] {
            self.step(&["review", "approve", item, "--choice", "1"])?;
        }
        Ok(())
    }
}

impl Default for CliSession {
    fn default() -> Self {
        Self::new()
    }
}

/// Puts a finished run back into the state a crash after `keep` journaled
/// cells would leave: run document still `running` with no cells, journal
/// truncated to `keep` lines plus a torn partial line.
pub fn simulate_crash(workspace: &Path, run_id: &str, keep: usize) -> Result<(), String> {
    let ws = Workspace::open(workspace).map_err(|e| e.to_string())?;
    let key = format!("runs/{run_id}");
    let stored = ws.require::<qagrade::grading::GradingRun>(&key).map_err(|e| e.to_string())?;
    let mut run = stored.value;
    run.cells.clear();
    run.failures.clear();
    run.distribution = None;
    run.status = qagrade::grading::RunStatus::Running;
    ws.put(&key, &run, Some(stored.version)).map_err(|e| e.to_string())?;
    let journal = workspace.join("runs").join(format!("{run_id}.cells.jsonl"));
    let text = std::fs::read_to_string(&journal).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    ensure!(lines.len() > keep, "journal has only {} lines", lines.len());
    let mut kept: String = lines[..keep].iter().map(|l| format!("{l}\n")).collect();
    kept.push_str(&lines[keep][..lines[keep].len() / 2]);
    std::fs::write(&journal, kept).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn end_to_end_oracle() -> Check {
    let s = CliSession::new();
    s.prepare()?;
    let shots = s.step(&["select-shots", "--method", "clustering", "--k", "4", "--seed", "0"])?;
    ensure!(shots["shot_ids"].as_array().map(Vec::len) == Some(4), "shots: {shots}");
    let graded = s.step(&["grade", "--backend", "oracle"])?;
    let run_id = graded["run_id"].as_str().ok_or("no run id")?.to_string();
    ensure!(graded["status"] == "complete", "run status {}", graded["status"]);
    ensure!(graded["progress"]["graded"] == 144, "graded {}", graded["progress"]["graded"]);

    let scores = s.step(&["score", "--run", &run_id, "--out", &s.path("reports.jsonl")])?;
    let histogram: u64 = scores["distribution"]["bins"].as_array().ok_or("no bins")?.iter().map(|b| b["count"].as_u64().unwrap_or(0)).sum();
    ensure!(histogram == 36, "histogram sums to {histogram}");

    let agree = s.step(&["agree", "--run", &run_id, "--against", "ground_truth"])?;
    ensure!(agree["kappa"].as_f64() == Some(1.0), "kappa {}", agree["kappa"]);
    let text = s.run(&["agree", "--run", &run_id, "--against", "ground_truth"]);
    ensure!(text.stdout.contains("kappa 1.0000"), "agree printed {}", text.stdout);

    // crash after 100 of 144 cells, then resume twice
    simulate_crash(&s.workspace(), &run_id, 100)?;
    let resumed = s.step(&["grade", "--run-id", &run_id])?;
    ensure!(resumed["summary"]["backend_calls"] == 44, "resume made {} calls, expected 44", resumed["summary"]["backend_calls"]);
    ensure!(resumed["status"] == "complete", "resumed status {}", resumed["status"]);
    let again = s.step(&["grade", "--run-id", &run_id])?;
    ensure!(again["summary"]["backend_calls"] == 0, "second resume made {} calls", again["summary"]["backend_calls"]);
    let agree = s.step(&["agree", "--run", &run_id])?;
    ensure!(agree["kappa"].as_f64() == Some(1.0) && agree["n_pairs"] == 144, "after resume: {agree}");
    Ok("kappa 1.0, histogram 36, resume re-graded 0 of 100 journaled cells".to_string())
}

pub fn ablation_harness() -> Check {
    let s = CliSession::new();
    s.prepare()?;
    let (csv, svg) = (s.path("ablation.csv"), s.path("ablation.svg"));
    s.step(&["ablate", "--shots", "1,2,4", "--methods", "clustering,random", "--backend", "oracle", "--csv", &csv, "--svg", &svg])?;
    let points = read_ablation_csv(std::fs::File::open(&csv).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(points.len() == 6, "{} CSV rows", points.len());
    for p in &points {
        ensure!(p.kappa == 1.0, "{} {}: kappa {}", p.method, p.shots, p.kappa);
        ensure!(p.n_pairs == (40 - p.shots) * 4, "{} {}: {} pairs", p.method, p.shots, p.n_pairs);
    }
    let svg = std::fs::read_to_string(&svg).map_err(|e| e.to_string())?;
    ensure!(svg.starts_with("<svg") && svg.matches("class=\"series\"").count() == 2, "unexpected SVG");
    Ok("6 rows, kappa 1.0, pairs (40-shots)x4, SVG with 2 series".to_string())
}

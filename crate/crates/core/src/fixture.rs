//! Bundled synthetic biology assignment: four rubric points of weight 1,
//! 40 responses (plus one blank row dropped at ingest), planted labels from a
//! consensus and two graders, per-cell exemplar feedback, keyword rules that
//! reproduce the consensus labels, and three scripted candidate questions per
//! rubric point.

use std::path::Path;

use crate::gateway::RuleBook;
use crate::model::{load_assignment, load_labels, load_responses, Assignment, CorpusFormat, LabelSet, ResponseCorpus};
use crate::rrag::{Choice, EvaluationSet, ScriptedQuestions};
use crate::shots::FeedbackBook;

pub const ASSIGNMENT: &str = include_str!("../fixtures/biology/assignment.json");
pub const RESPONSES: &str = include_str!("../fixtures/biology/responses.jsonl");
pub const LABELS: &str = include_str!("../fixtures/biology/labels.jsonl");
pub const FEEDBACK: &str = include_str!("../fixtures/biology/feedback.jsonl");
pub const ORACLE_RULES: &str = include_str!("../fixtures/biology/oracle_rules.json");
pub const QUESTIONS: &str = include_str!("../fixtures/biology/questions.json");
pub const GENERAL_INSTRUCTION: &str = include_str!("../fixtures/biology/general_instruction.txt");

/// Grader id of the planted ground truth.
pub const GROUND_TRUTH: &str = "consensus";

pub const FILES: [(&str, &str); 7] = [
    ("assignment.json", ASSIGNMENT),
    ("responses.jsonl", RESPONSES),
    ("labels.jsonl", LABELS),
    ("feedback.jsonl", FEEDBACK),
    ("oracle_rules.json", ORACLE_RULES),
    ("questions.json", QUESTIONS),
    ("general_instruction.txt", GENERAL_INSTRUCTION),
];

pub fn assignment() -> Assignment {
    load_assignment(ASSIGNMENT.as_bytes()).expect("bundled assignment is valid")
}

pub fn responses() -> ResponseCorpus {
    load_responses(RESPONSES.as_bytes(), CorpusFormat::Jsonl).expect("bundled responses are valid")
}

pub fn labels() -> Vec<LabelSet> {
    load_labels(LABELS.as_bytes(), &responses().responses, &assignment().item_ids()).expect("bundled labels are valid")
}

pub fn label_set(grader_id: &str) -> LabelSet {
    labels().into_iter().find(|s| s.grader_id == grader_id).expect("bundled grader exists")
}

pub fn feedback() -> FeedbackBook {
    FeedbackBook::from_jsonl(FEEDBACK.as_bytes()).expect("bundled feedback is valid")
}

pub fn rules() -> RuleBook {
    RuleBook::from_json(ORACLE_RULES).expect("bundled rules are valid")
}

pub fn questions() -> ScriptedQuestions {
    serde_json::from_str(QUESTIONS).expect("bundled questions are valid")
}

/// Evaluation set with the first candidate approved for every rubric point.
pub fn approved_evaluation() -> EvaluationSet {
    let mut set = EvaluationSet::generate(&assignment(), 3, &questions()).expect("scripted generation succeeds");
    for item in &mut set.items {
        item.approve(Choice::Candidate(1), None, false, None).expect("fresh item approves");
    }
    set
}

/// Writes the fixture files into `dir`.
pub fn write_to(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in FILES {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

//! Turns a reference answer and rubric into evaluation question/answer pairs.
//!
//! Each rubric point becomes the conditioned target answer of one
//! [`EvaluationItem`]. A [`QuestionGenerator`] proposes candidate questions
//! for it (a model, a fixed script, or an instructor typing them in), the
//! item's gold excerpt is located in the reference answer, and an instructor
//! approves one question before any grading can start.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{CompletionBackend, CompletionRequest};
use crate::model::{item_id_for, Assignment};
use crate::text::word_tokens;

pub const DEFAULT_CANDIDATES: usize = 3;

#[derive(Debug, Error)]
pub enum RragError {
    #[error("question generation failed{}: {message}", if *.retryable { " (retryable)" } else { "" })]
    Generation { retryable: bool, message: String },
    #[error("candidate count must be at least 1")]
    ZeroCandidates,
    #[error("reference answer is empty")]
    EmptyReference,
    #[error("chosen question text is empty")]
    EmptyChoice,
    #[error("candidate {index} does not exist (item has {available})")]
    NoSuchCandidate { index: usize, available: usize },
    #[error("item `{0}` is already approved; pass the revise flag to change it")]
    AlreadyApproved(String),
    #[error("version conflict on item `{item_id}`: expected {expected}, current {current}")]
    VersionConflict {
        item_id: String,
        expected: u64,
        current: u64,
    },
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("items not yet approved: {}", .0.join(", "))]
    PendingItems(Vec<String>),
}

pub type Result<T, E = RragError> = std::result::Result<T, E>;

/// A rubric point's text marked as the answer a question must elicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAnswer {
    pub rubric_point_id: String,
    pub conditioned_answer: String,
}

/// One conditioned answer per rubric point, in rubric order.
pub fn mark_target_answers(assignment: &Assignment) -> Vec<TargetAnswer> {
    assignment
        .rubric
        .iter()
        .map(|p| TargetAnswer {
            rubric_point_id: p.id.clone(),
            conditioned_answer: p.text.clone(),
        })
        .collect()
}

pub trait QuestionGenerator: Sync {
    fn generate(&self, reference_answer: &str, target: &TargetAnswer, k: usize) -> Result<Vec<String>>;
}

/// Fixed candidate lists keyed by rubric point id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedQuestions(pub BTreeMap<String, Vec<String>>);

impl QuestionGenerator for ScriptedQuestions {
    fn generate(&self, _reference: &str, target: &TargetAnswer, k: usize) -> Result<Vec<String>> {
        let questions = self.0.get(&target.rubric_point_id).ok_or_else(|| RragError::Generation {
            retryable: false,
            message: format!("script has no questions for `{}`", target.rubric_point_id),
        })?;
        Ok(questions.iter().take(k).cloned().collect())
    }
}

/// Prompts an instructor for each candidate on a terminal-like stream.
pub struct ManualEntry<R, W> {
    io: Mutex<(R, W)>,
}

impl<R: BufRead + Send, W: Write + Send> ManualEntry<R, W> {
    pub fn new(input: R, output: W) -> Self {
        ManualEntry {
            io: Mutex::new((input, output)),
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> QuestionGenerator for ManualEntry<R, W> {
    fn generate(&self, reference: &str, target: &TargetAnswer, k: usize) -> Result<Vec<String>> {
        let io_err = |e: std::io::Error| RragError::Generation {
            retryable: false,
            message: e.to_string(),
        };
        let mut guard = self.io.lock().expect("manual entry poisoned");
        let (input, output) = &mut *guard;
        writeln!(output, "Reference answer: {reference}").map_err(io_err)?;
        writeln!(
            output,
            "Enter {k} question(s) whose answer is \"{}\" ({}):",
            target.conditioned_answer, target.rubric_point_id
        )
        .map_err(io_err)?;
        let mut questions = Vec::with_capacity(k);
        for n in 1..=k {
            write!(output, "  {n}> ").map_err(io_err)?;
            output.flush().map_err(io_err)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io_err)? == 0 {
                break;
            }
            questions.push(line.trim().to_string());
        }
        Ok(questions)
    }
}

/// Asks a chat model for answer-conditioned questions, one per line.
pub struct ModelQuestions<B> {
    backend: B,
}

impl<B: CompletionBackend> ModelQuestions<B> {
    pub fn new(backend: B) -> Self {
        ModelQuestions { backend }
    }

    pub fn prompt(reference: &str, target: &TargetAnswer, k: usize) -> String {
        format!(
            "Read the reference answer below and write {k} different questions whose correct answer is exactly \"{answer}\" \
according to the reference answer. Each question must be answerable from the reference answer alone. \
Reply with one question per line and nothing else.\n\nReference answer:\n{reference}\n\nAnswer: {answer}\n",
            answer = target.conditioned_answer
        )
    }
}

fn strip_enumeration(line: &str) -> &str {
    let line = line.trim();
    let rest = line.trim_start_matches(|c: char| c.is_ascii_digit());
    let rest = if rest.len() < line.len() {
        match rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            Some(stripped) => stripped,
            None => line,
        }
    } else {
        rest.strip_prefix("- ").or_else(|| rest.strip_prefix("* ")).unwrap_or(rest)
    };
    rest.trim()
}

impl<B: CompletionBackend> QuestionGenerator for ModelQuestions<B> {
    fn generate(&self, reference: &str, target: &TargetAnswer, k: usize) -> Result<Vec<String>> {
        let request = CompletionRequest::new(Self::prompt(reference, target, k));
        let record = self.backend.complete(&request).map_err(|e| RragError::Generation {
            retryable: e.is_retryable(),
            message: e.to_string(),
        })?;
        Ok(record
            .raw_text
            .lines()
            .map(strip_enumeration)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateQuestions {
    pub questions: Vec<String>,
    /// Fewer than `k` distinct non-empty questions came back.
    pub degraded: bool,
}

pub fn generate_candidate_questions(
    reference_answer: &str,
    target: &TargetAnswer,
    k: usize,
    generator: &dyn QuestionGenerator,
) -> Result<CandidateQuestions> {
    if k == 0 {
        return Err(RragError::ZeroCandidates);
    }
    let raw = generator.generate(reference_answer, target, k)?;
    let mut seen = HashSet::new();
    let questions: Vec<String> = raw
        .into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty() && seen.insert(q.clone()))
        .take(k)
        .collect();
    let degraded = questions.len() < k;
    if degraded {
        log::warn!(
            "only {} of {k} distinct candidate questions for `{}`",
            questions.len(),
            target.rubric_point_id
        );
    }
    Ok(CandidateQuestions { questions, degraded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcerptMatch {
    Substring,
    TokenOverlap,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldExcerpt {
    pub text: String,
    pub matched: ExcerptMatch,
}

/// Byte spans of sentences: a sentence ends at '.', '!' or '?' followed by
/// whitespace or the end of the text. Leading whitespace is excluded.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if boundary {
                spans.push((start.take().expect("open sentence"), i + c.len_utf8()));
            }
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            spans.push((s, end));
        }
    }
    spans
}

/// Minimal run of reference sentences that contains the conditioned answer.
pub fn extract_gold_excerpt(reference_answer: &str, conditioned_answer: &str) -> Result<GoldExcerpt> {
    let spans = sentence_spans(reference_answer);
    if spans.is_empty() {
        return Err(RragError::EmptyReference);
    }
    let phrase = conditioned_answer.trim().to_lowercase();
    let slice = |from: usize, to: usize| &reference_answer[spans[from].0..spans[to].1];

    if !phrase.is_empty() {
        for len in 1..=spans.len() {
            for first in 0..=spans.len() - len {
                let run = slice(first, first + len - 1);
                if run.to_lowercase().contains(&phrase) {
                    return Ok(GoldExcerpt {
                        text: run.to_string(),
                        matched: ExcerptMatch::Substring,
                    });
                }
            }
        }
    }

    // Exact token hits first, then abbreviations such as "H" for "hydrogen".
    let wanted: HashSet<String> = word_tokens(conditioned_answer).collect();
    let mut best: Option<(usize, (usize, usize))> = None;
    for (i, _) in spans.iter().enumerate() {
        let present: HashSet<String> = word_tokens(slice(i, i)).collect();
        let exact = wanted.intersection(&present).count();
        let prefix = wanted.iter().filter(|w| present.iter().any(|p| p.starts_with(w.as_str()))).count();
        let score = (exact, prefix);
        if prefix > 0 && best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    Ok(match best {
        Some((i, _)) => GoldExcerpt {
            text: slice(i, i).to_string(),
            matched: ExcerptMatch::TokenOverlap,
        },
        None => GoldExcerpt {
            text: reference_answer.to_string(),
            matched: ExcerptMatch::NoMatch,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Approved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationItem {
    pub item_id: String,
    pub rubric_point_id: String,
    pub candidates: Vec<String>,
    pub approved_question: Option<String>,
    pub gold_answer: String,
    pub gold_excerpt: String,
    pub question_specific_instruction: Option<String>,
    pub status: ItemStatus,
    pub version: u64,
    #[serde(default)]
    pub degraded: bool,
    #[serde(default = "default_match")]
    pub excerpt_match: ExcerptMatch,
}

fn default_match() -> ExcerptMatch {
    ExcerptMatch::Substring
}

/// What the instructor picked: a candidate (1-based) or their own wording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Choice {
    Candidate(usize),
    Text(String),
}

impl EvaluationItem {
    pub fn new(index: usize, target: &TargetAnswer, reference_answer: &str, candidates: CandidateQuestions) -> Result<Self> {
        let excerpt = extract_gold_excerpt(reference_answer, &target.conditioned_answer)?;
        Ok(EvaluationItem {
            item_id: item_id_for(index),
            rubric_point_id: target.rubric_point_id.clone(),
            candidates: candidates.questions,
            approved_question: None,
            gold_answer: target.conditioned_answer.clone(),
            gold_excerpt: excerpt.text,
            question_specific_instruction: None,
            status: ItemStatus::Pending,
            version: 0,
            degraded: candidates.degraded,
            excerpt_match: excerpt.matched,
        })
    }

    pub fn is_approved(&self) -> bool {
        self.status == ItemStatus::Approved
    }

    fn check_version(&self, expected: Option<u64>) -> Result<()> {
        match expected {
            Some(v) if v != self.version => Err(RragError::VersionConflict {
                item_id: self.item_id.clone(),
                expected: v,
                current: self.version,
            }),
            _ => Ok(()),
        }
    }

    /// Marks the item approved with the chosen question and optional instruction.
    pub fn approve(&mut self, choice: Choice, instruction: Option<String>, revise: bool, expected_version: Option<u64>) -> Result<()> {
        self.check_version(expected_version)?;
        if self.is_approved() && !revise {
            return Err(RragError::AlreadyApproved(self.item_id.clone()));
        }
        let question = match choice {
            Choice::Candidate(index) => self
                .candidates
                .get(index.wrapping_sub(1))
                .cloned()
                .ok_or(RragError::NoSuchCandidate {
                    index,
                    available: self.candidates.len(),
                })?,
            Choice::Text(text) => text,
        };
        if question.trim().is_empty() {
            return Err(RragError::EmptyChoice);
        }
        self.approved_question = Some(question);
        if let Some(text) = instruction {
            self.question_specific_instruction = Some(text);
        }
        self.status = ItemStatus::Approved;
        self.version += 1;
        Ok(())
    }

    /// Attaches or replaces the question-specific instruction.
    pub fn set_instruction(&mut self, instruction: Option<String>, expected_version: Option<u64>) -> Result<()> {
        self.check_version(expected_version)?;
        self.question_specific_instruction = instruction.filter(|s| !s.trim().is_empty());
        self.version += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationSet {
    pub assignment_id: String,
    pub items: Vec<EvaluationItem>,
}

impl EvaluationSet {
    /// Generates `k` candidates per rubric point (concurrently) and locates gold excerpts.
    pub fn generate(assignment: &Assignment, k: usize, generator: &dyn QuestionGenerator) -> Result<Self> {
        let targets = mark_target_answers(assignment);
        let reference = assignment.reference_answer.as_str();
        let results: Vec<Result<CandidateQuestions>> = std::thread::scope(|scope| {
            let handles: Vec<_> = targets
                .iter()
                .map(|t| scope.spawn(move || generate_candidate_questions(reference, t, k, generator)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generation thread panicked"))
                .collect()
        });
        let items = targets
            .iter()
            .zip(results)
            .enumerate()
            .map(|(i, (t, r))| EvaluationItem::new(i, t, reference, r?))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvaluationSet {
            assignment_id: assignment.id.clone(),
            items,
        })
    }

    pub fn item(&self, item_id: &str) -> Option<&EvaluationItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn item_mut(&mut self, item_id: &str) -> Result<&mut EvaluationItem> {
        self.items
            .iter_mut()
            .find(|i| i.item_id == item_id)
            .ok_or_else(|| RragError::UnknownItem(item_id.to_string()))
    }

    pub fn pending(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| !i.is_approved())
            .map(|i| i.item_id.clone())
            .collect()
    }

    pub fn ensure_all_approved(&self) -> Result<()> {
        let pending = self.pending();
        if pending.is_empty() {
            Ok(())
        } else {
            Err(RragError::PendingItems(pending))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RubricPoint, Weight};

    const REFERENCE: &str = "Molecule 1 consists entirely of C and H atoms. This makes molecule 1 entirely non-polar and therefore very hydrophobic. Molecule 3 has an O atom which can form hydrogen bonds, making it polar and hydrophilic.";

    fn assignment(points: &[&str]) -> Assignment {
        Assignment {
            id: "bio".into(),
            problem_text: "Rank the molecules.".into(),
            reference_answer: REFERENCE.into(),
            rubric: points
                .iter()
                .enumerate()
                .map(|(i, t)| RubricPoint {
                    id: format!("p{}", i + 1),
                    text: t.to_string(),
                    weight: Weight::ONE,
                })
                .collect(),
        }
    }

    #[test]
    fn targets_follow_rubric_order() {
        let targets = mark_target_answers(&assignment(&["O/OH", "H-Bonds", "C and H", "non-polar"]));
        let pairs: Vec<(&str, &str)> = targets
            .iter()
            .map(|t| (t.rubric_point_id.as_str(), t.conditioned_answer.as_str()))
            .collect();
        assert_eq!(pairs, [("p1", "O/OH"), ("p2", "H-Bonds"), ("p3", "C and H"), ("p4", "non-polar")]);
        assert_eq!(mark_target_answers(&assignment(&["x"])).len(), 1);
        let seven = assignment(&["a", "b", "c", "d", "e", "f", "g"]);
        let ids: Vec<String> = mark_target_answers(&seven).into_iter().map(|t| t.rubric_point_id).collect();
        assert_eq!(ids, ["p1", "p2", "p3", "p4", "p5", "p6", "p7"]);
    }

    #[test]
    fn excerpt_by_substring() {
        let ex = extract_gold_excerpt(REFERENCE, "C and H").unwrap();
        assert_eq!(ex.text, "Molecule 1 consists entirely of C and H atoms.");
        assert_eq!(ex.matched, ExcerptMatch::Substring);
        let ex = extract_gold_excerpt(REFERENCE, "NON-POLAR").unwrap();
        assert_eq!(ex.text, "This makes molecule 1 entirely non-polar and therefore very hydrophobic.");
    }

    #[test]
    fn excerpt_by_token_overlap() {
        // "O/OH" tokenizes to {o, oh}; only the third sentence has the token "o".
        let ex = extract_gold_excerpt(REFERENCE, "O/OH").unwrap();
        assert_eq!(ex.matched, ExcerptMatch::TokenOverlap);
        assert!(ex.text.starts_with("Molecule 3 has an O atom"));
        // {h, bonds}: one exact hit in sentences 1 and 3; "hydrogen" breaks the tie.
        let ex = extract_gold_excerpt(REFERENCE, "H-Bonds").unwrap();
        assert!(ex.text.starts_with("Molecule 3 has an O atom"));
        // prefixes alone still count when nothing matches exactly
        let ex = extract_gold_excerpt(REFERENCE, "hydro").unwrap();
        assert_eq!(ex.text, "This makes molecule 1 entirely non-polar and therefore very hydrophobic.");
    }

    #[test]
    fn excerpt_fallbacks() {
        assert_eq!(extract_gold_excerpt("Only one sentence here", "zzz").unwrap().text, "Only one sentence here");
        let ex = extract_gold_excerpt("A. B. C.", "zebra").unwrap();
        assert_eq!(ex.text, "A. B. C.");
        assert_eq!(ex.matched, ExcerptMatch::NoMatch);
        assert!(matches!(extract_gold_excerpt("   ", "x"), Err(RragError::EmptyReference)));
    }

    #[test]
    fn phrase_spanning_sentences_takes_minimal_run() {
        let text = "First part ends here. Then the rest. Unrelated!";
        let ex = extract_gold_excerpt(text, "here. then").unwrap();
        assert_eq!(ex.text, "First part ends here. Then the rest.");
    }

    #[test]
    fn sentence_splitting() {
        let text = "Version 2.5 works. Really?  Yes! trailing";
        let parts: Vec<&str> = sentence_spans(text).into_iter().map(|(a, b)| &text[a..b]).collect();
        assert_eq!(parts, ["Version 2.5 works.", "Really?", "Yes!", "trailing"]);
    }

    #[test]
    fn scripted_candidates_keep_order() {
        let mut script = ScriptedQuestions::default();
        script.0.insert(
            "p3".into(),
            vec!["What does molecule 1 consist of?".into(), "Which atoms make up molecule 1?".into(), "What elements are in molecule 1?".into()],
        );
        let target = TargetAnswer {
            rubric_point_id: "p3".into(),
            conditioned_answer: "C and H".into(),
        };
        let out = generate_candidate_questions(REFERENCE, &target, 3, &script).unwrap();
        assert_eq!(out.questions[0], "What does molecule 1 consist of?");
        assert_eq!(out.questions.len(), 3);
        assert!(!out.degraded);
        assert!(matches!(generate_candidate_questions(REFERENCE, &target, 0, &script), Err(RragError::ZeroCandidates)));
    }

    #[test]
    fn duplicates_flag_degraded() {
        let mut script = ScriptedQuestions::default();
        script.0.insert("p1".into(), vec!["Q?".into(), " Q? ".into(), "".into()]);
        let target = TargetAnswer {
            rubric_point_id: "p1".into(),
            conditioned_answer: "x".into(),
        };
        let out = generate_candidate_questions(REFERENCE, &target, 3, &script).unwrap();
        assert_eq!(out.questions, ["Q?"]);
        assert!(out.degraded);
    }

    #[test]
    fn manual_entry_echoes_instructor_input() {
        let input = std::io::Cursor::new("What does molecule 1 consist of?\n");
        let generator = ManualEntry::new(input, Vec::new());
        let target = TargetAnswer {
            rubric_point_id: "p3".into(),
            conditioned_answer: "C and H".into(),
        };
        let out = generate_candidate_questions(REFERENCE, &target, 1, &generator).unwrap();
        assert_eq!(out.questions, ["What does molecule 1 consist of?"]);
    }

    #[test]
    fn enumeration_stripped_from_model_lines() {
        assert_eq!(strip_enumeration("1. What is it?"), "What is it?");
        assert_eq!(strip_enumeration("2) Why?"), "Why?");
        assert_eq!(strip_enumeration("- How?"), "How?");
        assert_eq!(strip_enumeration("3 molecules?"), "3 molecules?");
    }

    fn pending_item() -> EvaluationItem {
        let target = TargetAnswer {
            rubric_point_id: "p3".into(),
            conditioned_answer: "C and H".into(),
        };
        let candidates = CandidateQuestions {
            questions: vec!["A?".into(), "B?".into(), "C?".into()],
            degraded: false,
        };
        EvaluationItem::new(2, &target, REFERENCE, candidates).unwrap()
    }

    #[test]
    fn approval_flow() {
        let mut item = pending_item();
        assert_eq!(item.item_id, "q3");
        assert_eq!(item.gold_answer, "C and H");
        item.approve(Choice::Candidate(2), None, false, Some(0)).unwrap();
        assert_eq!(item.approved_question.as_deref(), Some("B?"));
        assert_eq!(item.status, ItemStatus::Approved);
        assert_eq!(item.version, 1);
        let again = item.approve(Choice::Candidate(1), None, false, None);
        assert!(matches!(again, Err(RragError::AlreadyApproved(_))));
        item.approve(Choice::Text("Edited?".into()), None, true, None).unwrap();
        assert_eq!(item.approved_question.as_deref(), Some("Edited?"));
    }

    #[test]
    fn instruction_stored_verbatim() {
        let mut item = pending_item();
        let instruction = "As long as the answer mentions or implies that the molecule contains just carbon, it should be considered as being correct and graded as 1.";
        item.approve(Choice::Candidate(1), Some(instruction.into()), false, None).unwrap();
        assert_eq!(item.question_specific_instruction.as_deref(), Some(instruction));
    }

    #[test]
    fn approval_errors() {
        let mut item = pending_item();
        assert!(matches!(item.approve(Choice::Candidate(4), None, false, None), Err(RragError::NoSuchCandidate { .. })));
        assert!(matches!(item.approve(Choice::Candidate(0), None, false, None), Err(RragError::NoSuchCandidate { .. })));
        assert!(matches!(item.approve(Choice::Text(" ".into()), None, false, None), Err(RragError::EmptyChoice)));
        assert!(matches!(item.approve(Choice::Candidate(1), None, false, Some(7)), Err(RragError::VersionConflict { .. })));
        assert_eq!(item.status, ItemStatus::Pending);
    }

    #[test]
    fn evaluation_set_generation() {
        let a = assignment(&["O/OH", "H-Bonds", "C and H", "non-polar"]);
        let script = ScriptedQuestions(
            ["p1", "p2", "p3", "p4"]
                .iter()
                .map(|p| (p.to_string(), vec![format!("{p} one?"), format!("{p} two?"), format!("{p} three?")]))
                .collect(),
        );
        let mut set = EvaluationSet::generate(&a, 3, &script).unwrap();
        assert_eq!(set.items.len(), 4);
        assert_eq!(set.pending(), ["q1", "q2", "q3", "q4"]);
        assert!(set.ensure_all_approved().is_err());
        for id in ["q1", "q2", "q3", "q4"] {
            set.item_mut(id).unwrap().approve(Choice::Candidate(1), None, false, None).unwrap();
        }
        set.ensure_all_approved().unwrap();
        for item in &set.items {
            assert!(REFERENCE.contains(&item.gold_excerpt));
        }
    }
}

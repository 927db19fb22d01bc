use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{GradingError, Result};
use crate::model::{Assignment, Grade, StudentResponse};
use crate::rrag::EvaluationItem;
use crate::shots::{ShotError, ShotSet};

pub const DEFAULT_TEMPLATE: &str = "{{general_instruction}}

Question-specific instruction: {{question_specific_instruction}}

Graded examples:
{{shots}}

Full-credit answer: {{reference_answer}}

Gold answer: {{gold_answer}}

Evaluation question: {{question}}

Student's answer: {{student_response}}

Begin your reply with \"The student's score is 1.\" or \"The student's score is 0.\" and then justify your grading.";

/// Appended to the prompt when a reply could not be parsed.
pub const FORMAT_REMINDER: &str =
    "Your previous reply did not state a score. Begin your reply with \"The student's score is 1.\" or \"The student's score is 0.\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    GeneralInstruction,
    QuestionSpecificInstruction,
    Shots,
    ReferenceAnswer,
    GoldAnswer,
    GoldExcerpt,
    Question,
    StudentResponse,
}

impl Slot {
    pub const ALL: [Slot; 8] = [
        Slot::GeneralInstruction,
        Slot::QuestionSpecificInstruction,
        Slot::Shots,
        Slot::ReferenceAnswer,
        Slot::GoldAnswer,
        Slot::GoldExcerpt,
        Slot::Question,
        Slot::StudentResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::GeneralInstruction => "general_instruction",
            Slot::QuestionSpecificInstruction => "question_specific_instruction",
            Slot::Shots => "shots",
            Slot::ReferenceAnswer => "reference_answer",
            Slot::GoldAnswer => "gold_answer",
            Slot::GoldExcerpt => "gold_excerpt",
            Slot::Question => "question",
            Slot::StudentResponse => "student_response",
        }
    }

    fn from_name(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Optional slots may be empty; their paragraph is then left out.
    pub fn is_optional(self) -> bool {
        matches!(self, Slot::QuestionSpecificInstruction | Slot::Shots | Slot::GoldExcerpt)
    }

    /// The excerpt slot is opt-in and may be absent from a template.
    fn is_required(self) -> bool {
        self != Slot::GoldExcerpt
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_]+)\s*\}\}").expect("valid regex"))
}

/// Grading prompt layout: the general instruction plus a text body with
/// `{{name}}` placeholders. Paragraphs are separated by blank lines; a
/// paragraph holding an optional placeholder with an empty value is dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub general_instruction: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(general_instruction: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let template = PromptTemplate {
            general_instruction: general_instruction.into(),
            text: text.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn with_default_layout(general_instruction: impl Into<String>) -> Self {
        PromptTemplate::new(general_instruction, DEFAULT_TEMPLATE).expect("default template is valid")
    }

    pub fn load(general_instruction: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GradingError::Template(format!("{}: {e}", path.display())))?;
        PromptTemplate::new(general_instruction, text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.general_instruction.trim().is_empty() {
            return Err(GradingError::Template("general instruction is empty".into()));
        }
        let mut seen: BTreeMap<Slot, usize> = BTreeMap::new();
        for cap in placeholder_re().captures_iter(&self.text) {
            let name = &cap[1];
            let slot = Slot::from_name(name).ok_or_else(|| GradingError::Template(format!("unknown placeholder `{{{{{name}}}}}`")))?;
            *seen.entry(slot).or_default() += 1;
        }
        for slot in Slot::ALL {
            match seen.get(&slot).copied().unwrap_or(0) {
                0 if slot.is_required() => return Err(GradingError::Template(format!("missing placeholder `{{{{{}}}}}`", slot.name()))),
                0 | 1 => {}
                n => return Err(GradingError::Template(format!("placeholder `{{{{{}}}}}` appears {n} times", slot.name()))),
            }
        }
        Ok(())
    }

    pub fn uses(&self, slot: Slot) -> bool {
        placeholder_re().captures_iter(&self.text).any(|c| Slot::from_name(&c[1]) == Some(slot))
    }

    /// Substitutes every placeholder in one pass, so placeholder-like text
    /// inside values is never expanded.
    pub fn render(&self, values: &SlotValues) -> String {
        let kept: Vec<&str> = self
            .text
            .split("\n\n")
            .filter(|paragraph| {
                !placeholder_re().captures_iter(paragraph).any(|c| {
                    Slot::from_name(&c[1]).is_some_and(|slot| slot.is_optional() && values.get(slot).is_empty())
                })
            })
            .collect();
        let body = kept.join("\n\n");
        placeholder_re()
            .replace_all(&body, |c: &regex::Captures<'_>| {
                Slot::from_name(&c[1]).map(|s| values.get(s).to_string()).unwrap_or_default()
            })
            .into_owned()
    }
}

/// One few-shot exemplar for a given item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotExemplar<'a> {
    pub response_id: &'a str,
    pub text: &'a str,
    pub grade: Grade,
    pub feedback: &'a str,
}

/// Exemplars for `item_id` in shot order; every shot must carry feedback.
pub fn exemplars<'a>(shot_set: &'a ShotSet, item_id: &str, responses: &'a [StudentResponse]) -> Result<Vec<ShotExemplar<'a>>> {
    shot_set
        .shot_ids
        .iter()
        .map(|shot_id| {
            let response = responses
                .iter()
                .find(|r| &r.id == shot_id)
                .ok_or_else(|| GradingError::UnknownResponse(shot_id.clone()))?;
            let feedback = shot_set
                .shot_feedback
                .get(shot_id)
                .and_then(|m| m.get(item_id))
                .filter(|f| !f.feedback.trim().is_empty())
                .ok_or_else(|| {
                    GradingError::Shot(ShotError::MissingFeedback {
                        shot_id: shot_id.clone(),
                        item_id: item_id.to_string(),
                    })
                })?;
            Ok(ShotExemplar {
                response_id: shot_id,
                text: &response.text,
                grade: feedback.grade,
                feedback: &feedback.feedback,
            })
        })
        .collect()
}

pub fn render_shots(shots: &[ShotExemplar<'_>]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "Example {}:\nStudent's answer: {}\nThe student's score is {}. {}",
                i + 1,
                s.text,
                s.grade.as_u8(),
                s.feedback
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotValues {
    pub general_instruction: String,
    pub question_specific_instruction: String,
    pub shots: String,
    pub reference_answer: String,
    pub gold_answer: String,
    pub gold_excerpt: String,
    pub question: String,
    pub student_response: String,
}

impl SlotValues {
    pub fn get(&self, slot: Slot) -> &str {
        match slot {
            Slot::GeneralInstruction => &self.general_instruction,
            Slot::QuestionSpecificInstruction => &self.question_specific_instruction,
            Slot::Shots => &self.shots,
            Slot::ReferenceAnswer => &self.reference_answer,
            Slot::GoldAnswer => &self.gold_answer,
            Slot::GoldExcerpt => &self.gold_excerpt,
            Slot::Question => &self.question,
            Slot::StudentResponse => &self.student_response,
        }
    }

    pub fn for_cell(template: &PromptTemplate, assignment: &Assignment, item: &EvaluationItem, shots: &[ShotExemplar<'_>], student_text: &str) -> Result<Self> {
        let question = item
            .approved_question
            .as_ref()
            .filter(|_| item.is_approved())
            .ok_or_else(|| GradingError::Precondition(format!("item {} is not approved", item.item_id)))?;
        if !shots.is_empty() && !template.uses(Slot::Shots) {
            return Err(GradingError::Template("template has no `{{shots}}` placeholder".into()));
        }
        Ok(SlotValues {
            general_instruction: template.general_instruction.clone(),
            question_specific_instruction: item.question_specific_instruction.clone().unwrap_or_default(),
            shots: render_shots(shots),
            reference_answer: assignment.reference_answer.clone(),
            gold_answer: item.gold_answer.clone(),
            gold_excerpt: if template.uses(Slot::GoldExcerpt) { item.gold_excerpt.clone() } else { String::new() },
            question: question.clone(),
            student_response: student_text.to_string(),
        })
    }
}

/// Renders the grading prompt for one (response, item) cell.
pub fn build_prompt(template: &PromptTemplate, assignment: &Assignment, item: &EvaluationItem, shots: &[ShotExemplar<'_>], student_text: &str) -> Result<String> {
    let values = SlotValues::for_cell(template, assignment, item, shots, student_text)?;
    Ok(template.render(&values))
}

/// Checks that each of the student response, question and gold answer occurs
/// in the prompt exactly once, not counting occurrences inside other slot
/// values (a gold phrase quoted by the reference answer, say).
pub fn check_slot_presence(template: &PromptTemplate, values: &SlotValues) -> Result<()> {
    let prompt = template.render(values);
    for slot in [Slot::StudentResponse, Slot::Question, Slot::GoldAnswer] {
        let value = values.get(slot);
        let inside_others: usize = if value.is_empty() {
            0
        } else {
            Slot::ALL
                .into_iter()
                .filter(|&other| other != slot && template.uses(other))
                .map(|other| values.get(other).matches(value).count())
                .sum()
        };
        let found = if value.is_empty() { 0 } else { prompt.matches(value).count() };
        if found != inside_others + 1 {
            return Err(GradingError::SlotPresence {
                slot: slot.name(),
                found,
                expected: inside_others + 1,
            });
        }
    }
    for slot in Slot::ALL {
        let value = values.get(slot);
        if !value.is_empty() && template.uses(slot) && !prompt.contains(value) {
            return Err(GradingError::SlotPresence {
                slot: slot.name(),
                found: 0,
                expected: 1,
            });
        }
    }
    Ok(())
}

//! Grading prompts, output parsing and the (response × item) grading run.

mod parse;
mod run;
mod template;

use thiserror::Error;

pub use parse::{parse_grade, ParseError, ParsedGrade, ScorePattern};
pub use run::{
    annotate_relevance, grade_matrix, relevance_report, Annotation, CellFailure, GradeCell, GradeOptions, GradeSummary, GradingRun, Relevance,
    RelevanceReport, RunProgress, RunStatus,
};
pub use template::{
    build_prompt, check_slot_presence, exemplars, render_shots, PromptTemplate, ShotExemplar, Slot, SlotValues, DEFAULT_TEMPLATE, FORMAT_REMINDER,
};

use crate::gateway::GatewayError;
use crate::shots::ShotError;

#[derive(Debug, Error)]
pub enum GradingError {
    #[error("prompt template: {0}")]
    Template(String),
    #[error("{0}")]
    Precondition(String),
    #[error("evaluation items still pending approval: {}", .0.join(", "))]
    PendingItems(Vec<String>),
    #[error(transparent)]
    Shot(#[from] ShotError),
    #[error("unknown response `{0}`")]
    UnknownResponse(String),
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("slot `{slot}` occurs {found} time(s) in the prompt, expected {expected}")]
    SlotPresence { slot: &'static str, found: usize, expected: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid value: {0}")]
    Validation(String),
    #[error("cell `{cell}` is at version {current}, not {expected}")]
    VersionConflict { cell: String, expected: u64, current: u64 },
    #[error("cell journal: {0}")]
    Journal(std::io::Error),
}

pub type Result<T, E = GradingError> = std::result::Result<T, E>;

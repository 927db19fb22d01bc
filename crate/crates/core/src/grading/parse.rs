use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Grade;
use crate::text::normalize_quotes;

/// Which score declaration a reply used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePattern {
    /// "score is 1"
    ScoreIs,
    /// "score: 1"
    ScoreColon,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGrade {
    pub grade: Grade,
    pub justification: String,
    pub pattern: ScorePattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty model output")]
    Empty,
    #[error("no binary score declaration in model output: {raw:?}")]
    Unparseable { raw: String },
}

fn patterns() -> &'static [(ScorePattern, Regex); 2] {
    static RE: OnceLock<[(ScorePattern, Regex); 2]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            (ScorePattern::ScoreIs, Regex::new(r"(?i)\bscore\s+is\s*:?\s*(\d+(?:\.\d+)?)").expect("valid regex")),
            (ScorePattern::ScoreColon, Regex::new(r"(?i)\bscore\s*:\s*(\d+(?:\.\d+)?)").expect("valid regex")),
        ]
    })
}

/// Extracts the binary grade from the first score declaration in `raw`.
/// The justification is the full raw text.
pub fn parse_grade(raw: &str) -> Result<ParsedGrade, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let normalized = normalize_quotes(raw);
    let first = patterns()
        .iter()
        .filter_map(|(pattern, re)| re.captures(&normalized).map(|c| (c.get(0).expect("group 0").start(), *pattern, c[1].to_string())))
        .min_by_key(|(start, _, _)| *start);
    let unparseable = || ParseError::Unparseable { raw: raw.to_string() };
    let (_, pattern, value) = first.ok_or_else(unparseable)?;
    let grade = match value.parse::<f64>() {
        Ok(0.0) => Grade::ZERO,
        Ok(1.0) => Grade::ONE,
        _ => return Err(unparseable()),
    };
    Ok(ParsedGrade {
        grade,
        justification: raw.to_string(),
        pattern,
    })
}

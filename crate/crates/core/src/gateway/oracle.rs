//! Deterministic keyword-rule grader that answers in the same
//! "The student's score is N." format a chat model is asked to use.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_prompt, CompletionBackend, CompletionRecord, CompletionRequest, GatewayError, Result};

/// Case-insensitive accept/reject phrases for one evaluation item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRules {
    #[serde(default)]
    pub accept: Vec<String>,
    #[serde(default)]
    pub reject: Vec<String>,
}

impl KeywordRules {
    pub fn new<S: Into<String>>(accept: impl IntoIterator<Item = S>, reject: impl IntoIterator<Item = S>) -> Self {
        KeywordRules {
            accept: accept.into_iter().map(Into::into).collect(),
            reject: reject.into_iter().map(Into::into).collect(),
        }
    }

    /// Score 1 iff some accept-phrase occurs and no reject-phrase does.
    pub fn grade(&self, student_text: &str) -> String {
        let text = student_text.to_lowercase();
        let found = |phrases: &[String]| {
            phrases
                .iter()
                .find(|p| !p.is_empty() && text.contains(&p.to_lowercase()))
                .cloned()
        };
        match (found(&self.accept), found(&self.reject)) {
            (Some(accepted), None) => format!(
                "The student's score is 1. The answer mentions \"{accepted}\", which answers the evaluation question."
            ),
            (_, Some(rejected)) => format!(
                "The student's score is 0. The answer contains \"{rejected}\", which contradicts the expected answer."
            ),
            (None, None) => {
                let expected: Vec<String> = self.accept.iter().map(|p| format!("\"{p}\"")).collect();
                format!(
                    "The student's score is 0. The answer mentions none of the expected phrases ({}).",
                    expected.join(", ")
                )
            }
        }
    }
}

/// Keyword rules per item id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleBook(pub BTreeMap<String, KeywordRules>);

impl RuleBook {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("keyword rules: {e}")))
    }

    pub fn get(&self, item_id: &str) -> Option<&KeywordRules> {
        self.0.get(item_id)
    }
}

pub fn oracle_grade(rules: &RuleBook, item_id: &str, student_text: &str) -> Result<String> {
    rules
        .get(item_id)
        .map(|r| r.grade(student_text))
        .ok_or_else(|| GatewayError::Config(format!("no keyword rules for item `{item_id}`")))
}

pub struct OracleBackend {
    rules: RuleBook,
}

impl OracleBackend {
    pub fn new(rules: RuleBook) -> Self {
        OracleBackend { rules }
    }
}

impl CompletionBackend for OracleBackend {
    fn backend_id(&self) -> String {
        "oracle".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        check_prompt(request)?;
        let started = Instant::now();
        let context = request
            .context
            .as_ref()
            .ok_or_else(|| GatewayError::Config("oracle backend needs the cell context".into()))?;
        let text = oracle_grade(&self.rules, &context.item_id, &context.student_text)?;
        Ok(CompletionRecord::new(&request.prompt, text, started.elapsed(), 1, "oracle"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1() -> RuleBook {
        let mut book = RuleBook::default();
        book.0.insert("q1".into(), KeywordRules::new(["oxygen", "o atom", "oh"], []));
        book
    }

    #[test]
    fn accepted_phrase_scores_one() {
        let text = "Molecule 1 is the most hydrophobic because it is a carbon chain tho does not have the ability to create hydrogen or ionic bonds. Whereas Molecule 3 is more hydrophilic then molecule 1 due to its ability to form hydrogen bonds because of the lone pairs on the oxygen atom.";
        let out = oracle_grade(&q1(), "q1", text).unwrap();
        assert!(out.starts_with("The student's score is 1."), "{out}");
        assert!(out.contains("\"oxygen\""));
    }

    // The rule is coarse: "OH" on molecule 2 still satisfies an item about molecule 3.
    #[test]
    fn coarse_match_on_wrong_molecule() {
        let text = "Molecule 1 is most hydrophobic because it is all carbons and it can't make hydrogen bonds. But Molecule #2 has an OH at the end, allowing it to create h-bonds.";
        let out = oracle_grade(&q1(), "q1", text).unwrap();
        assert!(out.starts_with("The student's score is 1."), "{out}");
    }

    #[test]
    fn empty_text_scores_zero_and_reject_wins() {
        assert!(oracle_grade(&q1(), "q1", "").unwrap().starts_with("The student's score is 0."));
        let rules = KeywordRules::new(["hydrogen bond"], ["cannot form hydrogen bonds"]);
        let out = rules.grade("Molecule 3 cannot form hydrogen bonds.");
        assert!(out.starts_with("The student's score is 0."));
        assert!(out.contains("cannot form hydrogen bonds"));
    }

    #[test]
    fn missing_rules_is_config_error() {
        assert!(matches!(oracle_grade(&q1(), "q2", "x"), Err(GatewayError::Config(_))));
        let backend = OracleBackend::new(q1());
        assert!(backend.complete(&CompletionRequest::new("prompt")).is_err());
    }

    #[test]
    fn idempotent() {
        let backend = OracleBackend::new(q1());
        let req = CompletionRequest::new("p").with_context("q1", "an O atom");
        let a = backend.complete(&req).unwrap();
        let b = backend.complete(&req).unwrap();
        assert_eq!(a.raw_text, b.raw_text);
        assert_eq!(a.prompt_hash, b.prompt_hash);
    }
}

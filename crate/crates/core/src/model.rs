//! Domain types for assignments, student responses and human label sets,
//! together with the document loaders that validate them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Read};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema violation at `{path}`{}: {message}", line_suffix(*.line))]
    Schema {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("rubric must contain at least one point")]
    EmptyRubric,
    #[error("rubric point `{0}` has empty text")]
    EmptyRubricText(String),
    #[error("rubric point `{0}` has a negative weight")]
    NegativeWeight(String),
    #[error("duplicate rubric point id `{0}`")]
    DuplicateRubricPoint(String),
    #[error("duplicate response id `{0}`")]
    DuplicateResponse(String),
    #[error("label {value} for ({response_id}, {item_id}) is not 0 or 1")]
    LabelOutOfDomain {
        response_id: String,
        item_id: String,
        value: i64,
    },
    #[error("label references unknown response `{0}`")]
    UnknownResponse(String),
    #[error("label references unknown item `{0}`")]
    UnknownItem(String),
    #[error("grader `{grader_id}` labels ({response_id}, {item_id}) twice with different values")]
    ConflictingLabel {
        grader_id: String,
        response_id: String,
        item_id: String,
    },
    #[error("grader `{0}` appears with more than one role")]
    MixedRole(String),
    #[error("invalid weight `{0}`")]
    InvalidWeight(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Parses one JSON value, reporting the path of the offending field on failure.
pub(crate) fn from_json_str<T: DeserializeOwned>(text: &str, line: Option<usize>) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        IngestError::Schema {
            path,
            line,
            message: err.into_inner().to_string(),
        }
    })
}

/// A non-negative rational score value.
///
/// Serialized as a JSON integer when whole and as a `"num/den"` string
/// otherwise. Decimal inputs such as `0.5` are converted exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(Ratio<i64>);

impl Weight {
    pub const ZERO: Weight = Weight(Ratio::new_raw(0, 1));
    pub const ONE: Weight = Weight(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Weight(Ratio::new(numer, denom))
    }

    pub fn integer(value: i64) -> Self {
        Weight(Ratio::from_integer(value))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_negative(&self) -> bool {
        self.0 < Ratio::zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl std::ops::Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        Weight(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Weight {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || IngestError::InvalidWeight(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Weight(Ratio::new(n, d)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let negative = int.starts_with('-');
            let int_part: i64 = if int.is_empty() || int == "-" {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let denom = 10i64.pow(frac.len() as u32);
            let frac_part: i64 = frac.parse().map_err(|_| bad())?;
            let magnitude = int_part.abs() * denom + frac_part;
            let numer = if negative { -magnitude } else { magnitude };
            return Ok(Weight(Ratio::new(numer, denom)));
        }
        s.parse::<i64>().map(Weight::integer).map_err(|_| bad())
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            serializer.serialize_i64(*self.0.numer())
        } else {
            serializer.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(i) => Ok(Weight::integer(i)),
            // Shortest round-trip decimal keeps 0.1 as 1/10 rather than its binary expansion.
            Raw::Float(f) => format!("{f}").parse(),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// A binary grade or label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grade(bool);

impl Grade {
    pub const ZERO: Grade = Grade(false);
    pub const ONE: Grade = Grade(true);

    pub fn from_u8(value: u8) -> Option<Grade> {
        match value {
            0 => Some(Grade::ZERO),
            1 => Some(Grade::ONE),
            _ => None,
        }
    }

    pub fn is_one(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }

    pub fn flipped(self) -> Grade {
        Grade(!self.0)
    }
}

impl From<bool> for Grade {
    fn from(value: bool) -> Self {
        Grade(value)
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Grade {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Grade {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        match v {
            0 => Ok(Grade::ZERO),
            1 => Ok(Grade::ONE),
            other => Err(serde::de::Error::custom(format!("grade {other} is not 0 or 1"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricPoint {
    pub id: String,
    pub text: String,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: String,
    pub problem_text: String,
    pub reference_answer: String,
    pub rubric: Vec<RubricPoint>,
}

impl Assignment {
    pub fn validate(&self) -> Result<()> {
        if self.rubric.is_empty() {
            return Err(IngestError::EmptyRubric);
        }
        let mut seen = HashSet::new();
        for point in &self.rubric {
            if point.text.trim().is_empty() {
                return Err(IngestError::EmptyRubricText(point.id.clone()));
            }
            if point.weight.is_negative() {
                return Err(IngestError::NegativeWeight(point.id.clone()));
            }
            if !seen.insert(point.id.as_str()) {
                return Err(IngestError::DuplicateRubricPoint(point.id.clone()));
            }
        }
        Ok(())
    }

    /// Sum of all rubric weights.
    pub fn max_score(&self) -> Weight {
        self.rubric.iter().map(|p| p.weight).sum()
    }

    /// Evaluation item ids in rubric order (`q1`, `q2`, ...).
    pub fn item_ids(&self) -> Vec<String> {
        (0..self.rubric.len()).map(item_id_for).collect()
    }

    pub fn weight_of_item(&self, item_id: &str) -> Option<Weight> {
        self.item_index(item_id).map(|i| self.rubric[i].weight)
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        let index: usize = item_id.strip_prefix('q')?.parse().ok()?;
        (index >= 1 && index <= self.rubric.len() && item_id_for(index - 1) == item_id)
            .then(|| index - 1)
    }
}

/// Item id for the rubric point at `index` (zero-based).
pub fn item_id_for(index: usize) -> String {
    format!("q{}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentResponse {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRole {
    Grader,
    GroundTruth,
}

/// Identifies one (response, item) cell of the grading grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub response_id: String,
    pub item_id: String,
}

impl CellKey {
    pub fn new(response_id: impl Into<String>, item_id: impl Into<String>) -> Self {
        CellKey {
            response_id: response_id.into(),
            item_id: item_id.into(),
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.response_id, self.item_id)
    }
}

/// Labels from one human grader (or the reconciled ground truth).
/// Grids may be partial; missing cells are unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub grader_id: String,
    pub role: LabelRole,
    #[serde(with = "cell_list")]
    pub cells: BTreeMap<CellKey, Grade>,
}

impl LabelSet {
    pub fn new(grader_id: impl Into<String>, role: LabelRole) -> Self {
        LabelSet {
            grader_id: grader_id.into(),
            role,
            cells: BTreeMap::new(),
        }
    }

    pub fn get(&self, response_id: &str, item_id: &str) -> Option<Grade> {
        self.cells.get(&CellKey::new(response_id, item_id)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells of the `responses` × `items` grid that carry no label.
    pub fn unlabeled<'a>(&self, responses: &'a [StudentResponse], items: &'a [String]) -> Vec<CellKey> {
        responses
            .iter()
            .flat_map(|r| items.iter().map(move |i| CellKey::new(&r.id, i)))
            .filter(|k| !self.cells.contains_key(k))
            .collect()
    }

    /// One JSONL row per cell in key order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (key, label) in &self.cells {
            let row = LabelRow {
                grader_id: self.grader_id.clone(),
                response_id: key.response_id.clone(),
                item_id: key.item_id.clone(),
                label: label.as_u8() as i64,
                role: self.role,
            };
            out.push_str(&serde_json::to_string(&row).expect("label row serializes"));
            out.push('\n');
        }
        out
    }
}

pub(crate) mod cell_list {
    use super::{CellKey, Grade};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        response_id: String,
        item_id: String,
        label: Grade,
    }

    pub fn serialize<S: Serializer>(
        cells: &BTreeMap<CellKey, Grade>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = cells
            .iter()
            .map(|(k, v)| Entry {
                response_id: k.response_id.clone(),
                item_id: k.item_id.clone(),
                label: *v,
            })
            .collect();
        entries.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<CellKey, Grade>, D::Error> {
        let entries = Vec::<Entry>::deserialize(deserializer)?;
        Ok(entries
            .into_iter()
            .map(|e| (CellKey::new(e.response_id, e.item_id), e.label))
            .collect())
    }
}

/// Parses and validates an assignment document.
pub fn load_assignment(reader: impl Read) -> Result<Assignment> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let assignment: Assignment = from_json_str(&text, None)?;
    assignment.validate()?;
    Ok(assignment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn from_path(path: &std::path::Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Responses surviving ingest plus the number of blank rows dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCorpus {
    pub responses: Vec<StudentResponse>,
    pub dropped: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Number(u64),
}

impl From<RawId> for String {
    fn from(id: RawId) -> String {
        match id {
            RawId::Text(s) => s,
            RawId::Number(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct RawResponse {
    id: RawId,
    text: String,
}

pub fn load_responses(reader: impl Read, format: CorpusFormat) -> Result<ResponseCorpus> {
    let mut rows = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            let reader = std::io::BufReader::new(reader);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawResponse = from_json_str(&line, Some(n + 1))?;
                rows.push(StudentResponse {
                    id: raw.id.into(),
                    text: raw.text,
                });
            }
        }
        CorpusFormat::Csv => {
            let mut csv = csv::Reader::from_reader(reader);
            for record in csv.deserialize::<StudentResponse>() {
                rows.push(record?);
            }
        }
    }
    let mut seen = HashSet::new();
    for row in &rows {
        if !seen.insert(row.id.clone()) {
            return Err(IngestError::DuplicateResponse(row.id.clone()));
        }
    }
    let total = rows.len();
    let mut responses: Vec<StudentResponse> =
        rows.into_iter().filter(|r| !r.text.trim().is_empty()).collect();
    let dropped = total - responses.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} blank response(s) at ingest");
    }
    responses.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ResponseCorpus { responses, dropped })
}

pub fn responses_to_jsonl(responses: &[StudentResponse]) -> String {
    responses
        .iter()
        .map(|r| serde_json::to_string(r).expect("response serializes") + "\n")
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    grader_id: String,
    response_id: String,
    item_id: String,
    label: i64,
    role: LabelRole,
}

/// Parses a label document into one label set per grader, in order of first appearance.
pub fn load_labels(
    reader: impl Read,
    responses: &[StudentResponse],
    item_ids: &[String],
) -> Result<Vec<LabelSet>> {
    let known_responses: BTreeSet<&str> = responses.iter().map(|r| r.id.as_str()).collect();
    let known_items: BTreeSet<&str> = item_ids.iter().map(String::as_str).collect();
    let mut sets: Vec<LabelSet> = Vec::new();
    let reader = std::io::BufReader::new(reader);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LabelRow = from_json_str(&line, Some(n + 1))?;
        let label = match row.label {
            0 => Grade::ZERO,
            1 => Grade::ONE,
            value => {
                return Err(IngestError::LabelOutOfDomain {
                    response_id: row.response_id,
                    item_id: row.item_id,
                    value,
                })
            }
        };
        if !known_responses.contains(row.response_id.as_str()) {
            return Err(IngestError::UnknownResponse(row.response_id));
        }
        if !known_items.contains(row.item_id.as_str()) {
            return Err(IngestError::UnknownItem(row.item_id));
        }
        let set = match sets.iter().position(|s| s.grader_id == row.grader_id) {
            Some(i) => &mut sets[i],
            None => {
                sets.push(LabelSet::new(row.grader_id.clone(), row.role));
                sets.last_mut().expect("just pushed")
            }
        };
        if set.role != row.role {
            return Err(IngestError::MixedRole(row.grader_id));
        }
        let key = CellKey::new(row.response_id, row.item_id);
        if let Some(previous) = set.cells.insert(key.clone(), label) {
            if previous != label {
                return Err(IngestError::ConflictingLabel {
                    grader_id: row.grader_id,
                    response_id: key.response_id,
                    item_id: key.item_id,
                });
            }
        }
    }
    Ok(sets)
}

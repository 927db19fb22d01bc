//! Inter-rater agreement, two-grader reconciliation and the shot-count ablation.

mod ablation;
mod plot;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{ablation_sweep, read_ablation_csv, write_ablation_csv, AblationPoint, AblationRequest};
pub use plot::plot_svg;

use crate::grading::GradingError;
use crate::model::{Assignment, CellKey, Grade, LabelRole, LabelSet, Weight};
use crate::scoring::{consolidate, ItemGrade};
use crate::shots::ShotError;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("no label pairs to compare")]
    Empty,
    #[error("the two label sources share no cells")]
    NoOverlap,
    #[error("unknown disagreement `{0}`")]
    UnknownDisagreement(String),
    #[error("disagreement `{id}` is at version {current}, not {expected}")]
    VersionConflict { id: String, expected: u64, current: u64 },
    #[error("invalid ablation request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Grading(#[from] GradingError),
    #[error(transparent)]
    Shot(#[from] ShotError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = AgreementError> = std::result::Result<T, E>;

/// Paired binary labels: `nAB` counts cells where rater A said `A` and rater B said `B`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ConfusionCounts {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (Grade, Grade)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (a, b) in pairs {
            match (a.is_one(), b.is_one()) {
                (false, false) => c.n00 += 1,
                (false, true) => c.n01 += 1,
                (true, false) => c.n10 += 1,
                (true, true) => c.n11 += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn matches(&self) -> u64 {
        self.n00 + self.n11
    }

    pub fn raw_agreement(&self) -> Result<f64> {
        match self.total() {
            0 => Err(AgreementError::Empty),
            n => Ok(self.matches() as f64 / n as f64),
        }
    }

    pub fn kappa(&self) -> Result<Kappa> {
        let n = self.total();
        let a = [self.n00 + self.n01, self.n10 + self.n11];
        let b = [self.n00 + self.n10, self.n01 + self.n11];
        kappa_from_counts(n, self.matches(), a.iter().zip(&b).map(|(x, y)| (*x, *y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    /// Both raters used a single identical label, so chance agreement is 1
    /// and κ is set by convention (1 if they agree everywhere, else 0).
    pub degenerate: bool,
}

/// κ from the total, the agreeing count and per-category marginal pairs.
/// Computed as an integer ratio before the single division.
fn kappa_from_counts(n: u64, agree: u64, marginals: impl Iterator<Item = (u64, u64)>) -> Result<Kappa> {
    if n == 0 {
        return Err(AgreementError::Empty);
    }
    let n = n as u128;
    let chance: u128 = marginals.map(|(a, b)| a as u128 * b as u128).sum();
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / (n * n) as f64;
    if chance == n * n {
        let kappa = if agree as u128 == n { 1.0 } else { 0.0 };
        return Ok(Kappa { kappa, p_o, p_e, degenerate: true });
    }
    let numer = (n * agree as u128) as f64 - chance as f64;
    let denom = (n * n - chance) as f64;
    Ok(Kappa {
        kappa: numer / denom,
        p_o,
        p_e,
        degenerate: false,
    })
}

pub fn cohen_kappa(pairs: &[(Grade, Grade)]) -> Result<Kappa> {
    ConfusionCounts::from_pairs(pairs).kappa()
}

pub fn raw_agreement(pairs: &[(Grade, Grade)]) -> Result<f64> {
    ConfusionCounts::from_pairs(pairs).raw_agreement()
}

/// Unweighted κ over arbitrary categories (used for final-score agreement).
pub fn nominal_kappa<T: Ord>(pairs: &[(T, T)]) -> Result<Kappa> {
    let mut a: BTreeMap<&T, u64> = BTreeMap::new();
    let mut b: BTreeMap<&T, u64> = BTreeMap::new();
    let mut agree = 0;
    for (x, y) in pairs {
        *a.entry(x).or_default() += 1;
        *b.entry(y).or_default() += 1;
        agree += u64::from(x == y);
    }
    kappa_from_counts(pairs.len() as u64, agree, a.iter().map(|(k, ca)| (*ca, b.get(k).copied().unwrap_or(0))))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlattenedPairs {
    pub keys: Vec<CellKey>,
    /// (candidate, reference) per key.
    pub pairs: Vec<(Grade, Grade)>,
    /// Cells labeled on only one side.
    pub excluded: usize,
}

/// Pairs up cells present in both label sets, ordered by response id then
/// `item_order`. When `scope` is given only those responses are considered.
pub fn flatten_for_agreement(candidate: &LabelSet, reference: &LabelSet, item_order: &[String], scope: Option<&[String]>) -> Result<FlattenedPairs> {
    let scope: Option<BTreeSet<&str>> = scope.map(|s| s.iter().map(String::as_str).collect());
    let in_scope = |k: &CellKey| scope.as_ref().is_none_or(|s| s.contains(k.response_id.as_str()));
    let rank: HashMap<&str, usize> = item_order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let universe: BTreeSet<&CellKey> = candidate.cells.keys().chain(reference.cells.keys()).filter(|k| in_scope(k)).collect();
    let mut shared: Vec<&CellKey> = universe
        .iter()
        .copied()
        .filter(|k| candidate.cells.contains_key(*k) && reference.cells.contains_key(*k))
        .collect();
    if shared.is_empty() {
        return Err(AgreementError::NoOverlap);
    }
    shared.sort_by(|x, y| {
        x.response_id
            .cmp(&y.response_id)
            .then_with(|| rank.get(x.item_id.as_str()).unwrap_or(&usize::MAX).cmp(rank.get(y.item_id.as_str()).unwrap_or(&usize::MAX)))
            .then_with(|| x.item_id.cmp(&y.item_id))
    });
    Ok(FlattenedPairs {
        excluded: universe.len() - shared.len(),
        pairs: shared.iter().map(|k| (candidate.cells[*k], reference.cells[*k])).collect(),
        keys: shared.into_iter().cloned().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScoreAgreement {
    pub n_responses: usize,
    pub kappa: f64,
    pub raw: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub candidate: String,
    pub reference: String,
    pub counts: ConfusionCounts,
    pub kappa: f64,
    pub raw: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub degenerate: bool,
    pub n_pairs: usize,
    pub excluded: usize,
    /// κ over whole-response final scores, for responses fully labeled on both sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<FinalScoreAgreement>,
}

pub fn agreement_report(candidate: &LabelSet, reference: &LabelSet, assignment: &Assignment, scope: Option<&[String]>) -> Result<AgreementReport> {
    let items = assignment.item_ids();
    let flat = flatten_for_agreement(candidate, reference, &items, scope)?;
    let counts = ConfusionCounts::from_pairs(&flat.pairs);
    let k = counts.kappa()?;

    let mut per_response: BTreeMap<&str, (Vec<ItemGrade>, Vec<ItemGrade>)> = BTreeMap::new();
    for (key, (c, r)) in flat.keys.iter().zip(&flat.pairs) {
        let entry = per_response.entry(key.response_id.as_str()).or_default();
        entry.0.push(ItemGrade::new(&key.item_id, *c, ""));
        entry.1.push(ItemGrade::new(&key.item_id, *r, ""));
    }
    let finals: Vec<(Weight, Weight)> = per_response
        .iter()
        .filter_map(|(id, (c, r))| Some((consolidate(id, c, assignment).ok()?.final_score, consolidate(id, r, assignment).ok()?.final_score)))
        .collect();
    let final_score = nominal_kappa(&finals).ok().map(|fk| FinalScoreAgreement {
        n_responses: finals.len(),
        kappa: fk.kappa,
        raw: fk.p_o,
        degenerate: fk.degenerate,
    });

    Ok(AgreementReport {
        candidate: candidate.grader_id.clone(),
        reference: reference.grader_id.clone(),
        counts,
        kappa: k.kappa,
        raw: counts.raw_agreement()?,
        p_o: k.p_o,
        p_e: k.p_e,
        degenerate: k.degenerate,
        n_pairs: flat.pairs.len(),
        excluded: flat.excluded,
        final_score,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub id: String,
    pub response_id: String,
    pub item_id: String,
    pub label_a: Grade,
    pub label_b: Grade,
    #[serde(default)]
    pub resolution: Option<Grade>,
    #[serde(default)]
    pub resolver_id: Option<String>,
    #[serde(default)]
    pub version: u64,
}

/// Outcome of comparing two graders' labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub grader_a: String,
    pub grader_b: String,
    pub disagreements: Vec<Disagreement>,
    /// Agreed cells plus resolved disagreements.
    pub ground_truth: LabelSet,
    pub unlabeled_by_a: Vec<CellKey>,
    pub unlabeled_by_b: Vec<CellKey>,
}

pub fn reconcile(a: &LabelSet, b: &LabelSet) -> Result<Reconciliation> {
    let mut ground_truth = LabelSet::new("ground_truth", LabelRole::GroundTruth);
    let mut disagreements = Vec::new();
    let mut shared = 0;
    for (key, la) in &a.cells {
        let Some(lb) = b.cells.get(key) else { continue };
        shared += 1;
        if la == lb {
            ground_truth.cells.insert(key.clone(), *la);
        } else {
            disagreements.push(Disagreement {
                id: key.to_string(),
                response_id: key.response_id.clone(),
                item_id: key.item_id.clone(),
                label_a: *la,
                label_b: *lb,
                resolution: None,
                resolver_id: None,
                version: 0,
            });
        }
    }
    if shared == 0 {
        return Err(AgreementError::NoOverlap);
    }
    Ok(Reconciliation {
        grader_a: a.grader_id.clone(),
        grader_b: b.grader_id.clone(),
        disagreements,
        ground_truth,
        unlabeled_by_a: b.cells.keys().filter(|k| !a.cells.contains_key(*k)).cloned().collect(),
        unlabeled_by_b: a.cells.keys().filter(|k| !b.cells.contains_key(*k)).cloned().collect(),
    })
}

impl Reconciliation {
    pub fn pending(&self) -> impl Iterator<Item = &Disagreement> {
        self.disagreements.iter().filter(|d| d.resolution.is_none())
    }

    /// Every shared cell has an agreed label.
    pub fn is_complete(&self) -> bool {
        self.pending().next().is_none()
    }

    /// Writes the agreed label into the ground truth.
    pub fn resolve(&mut self, id: &str, label: Grade, resolver_id: &str, expected_version: Option<u64>) -> Result<&Disagreement> {
        let d = self
            .disagreements
            .iter_mut()
            .find(|d| d.id == id)
            .ok_or_else(|| AgreementError::UnknownDisagreement(id.to_string()))?;
        if let Some(expected) = expected_version {
            if expected != d.version {
                return Err(AgreementError::VersionConflict {
                    id: id.to_string(),
                    expected,
                    current: d.version,
                });
            }
        }
        d.resolution = Some(label);
        d.resolver_id = Some(resolver_id.to_string());
        d.version += 1;
        self.ground_truth.cells.insert(CellKey::new(&d.response_id, &d.item_id), label);
        Ok(d)
    }
}

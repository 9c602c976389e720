//! Micro-F1 scoring with `no_relation` as the background class, and
//! before/after robustness deltas.
//!
//! Zero-denominator convention: precision is 1 when nothing was guessed,
//! recall is 1 when there are no positive golds; F1 is 0 when `p + r = 0`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ReInstance, NO_RELATION};
use crate::oracle::{predict_all, BatchOptions, OracleError, OraclePrediction, OracleRequest, RelationOracle};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("corpora are not id-aligned: {0}")]
    Misaligned(String),
    #[error("no prediction for instance {0}")]
    MissingPrediction(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Precision, recall and F1 from counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub n_correct: usize,
    pub n_guessed: usize,
    pub n_gold: usize,
}

impl<T: Scalar> Prf<T> {
    pub fn from_counts(n_correct: usize, n_guessed: usize, n_gold: usize) -> Self {
        let precision = if n_guessed == 0 { T::one() } else { T::ratio(n_correct, n_guessed) };
        let recall = if n_gold == 0 { T::one() } else { T::ratio(n_correct, n_gold) };
        let sum = precision.clone() + recall.clone();
        let f1 = if sum > T::zero() { T::two() * precision.clone() * recall.clone() / sum } else { T::zero() };
        Prf { precision, recall, f1, n_correct, n_guessed, n_gold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    #[serde(flatten)]
    pub micro: Prf<T>,
    /// Keyed by relation; false positives count against the predicted
    /// relation, false negatives against the gold relation.
    pub per_relation: BTreeMap<String, Prf<T>>,
}

impl<T> EvalReport<T> {
    pub fn f1(&self) -> &T {
        &self.micro.f1
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    correct: usize,
    guessed: usize,
    gold: usize,
}

/// Scores position-aligned gold and predicted labels.
pub fn micro_f1<T: Scalar, G: AsRef<str>, P: AsRef<str>>(golds: &[G], preds: &[P]) -> Result<EvalReport<T>, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch { golds: golds.len(), preds: preds.len() });
    }
    let mut total = Counts::default();
    let mut per: BTreeMap<&str, Counts> = BTreeMap::new();
    for (g, p) in golds.iter().zip(preds) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if p != NO_RELATION {
            total.guessed += 1;
            per.entry(p).or_default().guessed += 1;
        }
        if g != NO_RELATION {
            total.gold += 1;
            per.entry(g).or_default().gold += 1;
            if p == g {
                total.correct += 1;
                per.entry(g).or_default().correct += 1;
            }
        }
    }
    Ok(EvalReport {
        micro: Prf::from_counts(total.correct, total.guessed, total.gold),
        per_relation: per
            .into_iter()
            .map(|(rel, c)| (rel.to_string(), Prf::from_counts(c.correct, c.guessed, c.gold)))
            .collect(),
    })
}

/// Scores predictions matched to instances by id.
pub fn score_predictions<T: Scalar>(
    instances: &[ReInstance],
    predictions: &[OraclePrediction],
) -> Result<EvalReport<T>, EvalError> {
    let by_id: HashMap<&str, &str> = predictions.iter().map(|p| (p.id.as_str(), p.label.as_str())).collect();
    let preds = instances
        .iter()
        .map(|i| by_id.get(i.id()).copied().ok_or_else(|| EvalError::MissingPrediction(i.id().to_string())))
        .collect::<Result<Vec<&str>, _>>()?;
    let golds: Vec<&str> = instances.iter().map(ReInstance::relation).collect();
    micro_f1(&golds, &preds)
}

/// Queries `oracle` on every instance and scores the result.
pub fn evaluate<T: Scalar>(
    instances: &[ReInstance],
    oracle: &dyn RelationOracle,
    opts: &BatchOptions,
) -> Result<(EvalReport<T>, Vec<OraclePrediction>), EvalError> {
    let requests: Vec<OracleRequest> = instances.iter().map(OracleRequest::from).collect();
    let outcome = predict_all(oracle, &requests, opts)?;
    let report = score_predictions(instances, &outcome.responses)?;
    Ok((report, outcome.responses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport<T> {
    pub f1_before: T,
    pub f1_after: T,
    /// `(before - after) / before`; `None` when `f1_before` is zero.
    pub relative_drop: Option<T>,
}

impl<T: Scalar> DeltaReport<T> {
    pub fn new(f1_before: T, f1_after: T) -> Self {
        let relative_drop = if f1_before == T::zero() {
            None
        } else {
            Some((f1_before.clone() - f1_after.clone()) / f1_before.clone())
        };
        DeltaReport { f1_before, f1_after, relative_drop }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport<T> {
    pub before: EvalReport<T>,
    pub after: EvalReport<T>,
    pub delta: DeltaReport<T>,
}

fn check_aligned(before: &[ReInstance], after: &[ReInstance]) -> Result<(), EvalError> {
    let a: HashSet<&str> = before.iter().map(ReInstance::id).collect();
    let b: HashSet<&str> = after.iter().map(ReInstance::id).collect();
    if a.len() != before.len() || b.len() != after.len() {
        return Err(EvalError::Misaligned("duplicate ids".into()));
    }
    if let Some(id) = a.symmetric_difference(&b).next() {
        return Err(EvalError::Misaligned(format!("id {id} is present in only one corpus")));
    }
    Ok(())
}

/// Scores `oracle` on the original and the replaced corpus.
pub fn robustness_eval<T: Scalar>(
    before: &[ReInstance],
    after: &[ReInstance],
    oracle: &dyn RelationOracle,
    opts: &BatchOptions,
) -> Result<RobustnessReport<T>, EvalError> {
    check_aligned(before, after)?;
    let (b, _) = evaluate::<T>(before, oracle, opts)?;
    let (a, _) = evaluate::<T>(after, oracle, opts)?;
    let delta = DeltaReport::new(b.micro.f1.clone(), a.micro.f1.clone());
    Ok(RobustnessReport { before: b, after: a, delta })
}

/// Published reference scores, kept as documented fixtures. They need the
/// original fine-tuned models and are not reproduced here.
pub mod reference {
    /// (model, F1 on the original test set, F1 after replacement, printed
    /// drop), all in percent. Negative drops are gains.
    pub const F1_BEFORE_AFTER: &[(&str, f64, f64, f64)] = &[
        ("LUKE", 72.7, 45.0, 44.0),
        ("LUKE w/ Resample", 73.1, 45.8, 37.0),
        ("LUKE w/ entity mask (w/o name, w/o type)", 21.3, 21.0, 1.0),
        ("LUKE w/ entity mask (w/o name, w/ type)", 44.9, 45.9, -2.0),
        ("LUKE w/ entity mask (w/ name, w/ type)", 72.3, 61.2, 15.0),
        ("LUKE w/ Focal", 72.9, 47.1, 35.0),
        ("LUKE w/ CoRE", 74.6, 61.7, 17.0),
    ];
}

//! Accuracy, formula score, and critic-decision accuracy.
//!
//! Each item is correct, incorrect, or abstained. `FS(k)` scores +1 per
//! correct answer, `-k` per incorrect answer and 0 per abstention, as a
//! percentage of the item count.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::inference::{FinalDecision, InferenceOutcome};
use crate::qa_data::Dataset;
use crate::reasoner::Answer;
use crate::scalar::Scalar;
use crate::verdict::Verdict;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no gold answer for {0:?}")]
    MissingGold(String),
    #[error("no outcomes to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemScore {
    Correct,
    Incorrect,
    Abstain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult<F> {
    pub n: usize,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub n_abstain: usize,
    /// Percent.
    pub acc: F,
    /// `(k, FS(k))` pairs in the order requested.
    pub fs: Vec<(F, F)>,
    /// Percent.
    pub acc_d: F,
}

fn percent<F: Scalar>(num: F, n: usize) -> F {
    F::lit(100.0) * num / F::of_usize(n)
}

/// `100 * (correct - k * incorrect) / n`.
pub fn formula_score<F: Scalar>(n_correct: usize, n_incorrect: usize, n_abstain: usize, k: F) -> F {
    let n = n_correct + n_incorrect + n_abstain;
    if n == 0 {
        return F::zero();
    }
    percent(F::of_usize(n_correct) - k * F::of_usize(n_incorrect), n)
}

/// Abstentions include an accepted "none of the above".
pub fn classify(decision: &FinalDecision, gold_index: usize) -> ItemScore {
    match decision {
        FinalDecision::Abstained | FinalDecision::Answered(Answer::NoneOfTheAbove) => {
            ItemScore::Abstain
        }
        FinalDecision::Answered(a) if a.is_index(gold_index) => ItemScore::Correct,
        FinalDecision::Answered(_) => ItemScore::Incorrect,
    }
}

/// A final-turn decision is right when it accepts a correct answer or
/// rejects an incorrect one.
fn decision_is_right<F>(outcome: &InferenceOutcome<F>, gold_index: usize) -> bool {
    match outcome.last_turn() {
        Some(t) => t.answer.is_index(gold_index) == (t.verdict == Verdict::Accept),
        None => false,
    }
}

impl<F: Scalar> EvalResult<F> {
    /// Builds a result from counts; `acc_d` is supplied by the caller.
    pub fn from_counts(
        n_correct: usize,
        n_incorrect: usize,
        n_abstain: usize,
        ks: &[F],
        acc_d: F,
    ) -> Self {
        let n = n_correct + n_incorrect + n_abstain;
        let acc = if n == 0 {
            F::zero()
        } else {
            percent(F::of_usize(n_correct), n)
        };
        EvalResult {
            n,
            n_correct,
            n_incorrect,
            n_abstain,
            acc,
            fs: ks
                .iter()
                .map(|&k| (k, formula_score(n_correct, n_incorrect, n_abstain, k)))
                .collect(),
            acc_d,
        }
    }

    pub fn fs_at(&self, k: F) -> Option<F> {
        self.fs.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    pub fn to_json(&self) -> Value {
        let as_f64 = |v: F| v.to_f64().unwrap_or(f64::NAN);
        let fs: Map<String, Value> = self
            .fs
            .iter()
            .map(|(k, v)| (format!("{k}"), json!(as_f64(*v))))
            .collect();
        json!({
            "n": self.n,
            "counts": {
                "correct": self.n_correct,
                "incorrect": self.n_incorrect,
                "abstain": self.n_abstain,
            },
            "acc": as_f64(self.acc),
            "fs": fs,
            "acc_d": as_f64(self.acc_d),
        })
    }

    /// Aligned plain-text table, percentages to one decimal place.
    pub fn table(&self, label: &str) -> String {
        let mut header = format!("{:<12} {:>6} {:>7}", "set", "n", "Acc");
        let mut row = format!("{:<12} {:>6} {:>7.1}", label, self.n, self.acc);
        for (k, v) in &self.fs {
            let name = format!("FS({k})");
            let _ = write!(header, " {name:>8}");
            let _ = write!(row, " {v:>8.1}");
        }
        let _ = write!(header, " {:>7}", "Acc(D)");
        let _ = write!(row, " {:>7.1}", self.acc_d);
        format!("{header}\n{row}\n")
    }
}

/// Scores loop outcomes against a gold lookup. Outcomes from several
/// datasets can be pooled by supplying a lookup over all of them.
pub fn score_outcomes_with<F: Scalar>(
    outcomes: &[InferenceOutcome<F>],
    gold: impl Fn(&str) -> Option<usize>,
    ks: &[F],
) -> Result<EvalResult<F>, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut c, mut i, mut a, mut right) = (0, 0, 0, 0);
    for o in outcomes {
        let g =
            gold(&o.question_id).ok_or_else(|| MetricsError::MissingGold(o.question_id.clone()))?;
        match classify(&o.final_decision, g) {
            ItemScore::Correct => c += 1,
            ItemScore::Incorrect => i += 1,
            ItemScore::Abstain => a += 1,
        }
        if decision_is_right(o, g) {
            right += 1;
        }
    }
    let acc_d = percent(F::of_usize(right), outcomes.len());
    Ok(EvalResult::from_counts(c, i, a, ks, acc_d))
}

pub fn score_outcomes<F: Scalar>(
    outcomes: &[InferenceOutcome<F>],
    gold: &Dataset,
    ks: &[F],
) -> Result<EvalResult<F>, MetricsError> {
    let lookup: std::collections::HashMap<&str, usize> = gold
        .items
        .iter()
        .map(|i| (i.id.as_str(), i.gold_index))
        .collect();
    score_outcomes_with(outcomes, |id| lookup.get(id).copied(), ks)
}

/// Single-pass (no critic) decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroShotDecision {
    Answered { correct: bool },
    Abstained,
}

/// Percentage of correct answers plus abstentions.
pub fn score_zero_shot<F: Scalar>(decisions: &[ZeroShotDecision]) -> F {
    if decisions.is_empty() {
        return F::zero();
    }
    let good = decisions
        .iter()
        .filter(|d| !matches!(d, ZeroShotDecision::Answered { correct: false }))
        .count();
    percent(F::of_usize(good), decisions.len())
}

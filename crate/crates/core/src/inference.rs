//! The deployed loop: the reasoner proposes, the critic judges the rendered
//! turn, and the loop continues until the critic accepts or the turn budget
//! runs out (an abstention).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::critic::{Critic, CriticError, TurnView};
use crate::distill::TurnRecord;
use crate::jsonl::{read_lines_if_exists, AtomicJsonlWriter};
use crate::pool::run_ordered;
use crate::qa_data::{Dataset, QaItem};
use crate::reasoner::{
    build_prompt, parse_response, Answer, ContextEntry, PromptError, PromptStrategy, Reasoner,
    ReasonerCall, ReasonerError,
};
use crate::scalar::Scalar;
use crate::trainprep::DmInputRenderer;
use crate::verdict::Verdict;

/// Default turn budget at inference time.
pub const DEFAULT_INFERENCE_TURNS: usize = 5;

const FLUSH_EVERY: usize = 32;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("reasoner backend: {0}")]
    Backend(#[from] ReasonerError),
    #[error("critic: {0}")]
    Critic(#[from] CriticError),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("max_turns must be at least 1")]
    NoTurns,
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTurn<F> {
    pub turn: usize,
    pub answer: Answer,
    pub rationale: String,
    pub p_accept: F,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FinalDecision {
    Answered(Answer),
    Abstained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome<F> {
    pub question_id: String,
    pub final_decision: FinalDecision,
    pub turns: Vec<InferenceTurn<F>>,
}

impl<F> InferenceOutcome<F> {
    pub fn last_turn(&self) -> Option<&InferenceTurn<F>> {
        self.turns.last()
    }
}

/// Runs the critic-gated loop on one question.
pub fn infer_item<F, R, C>(
    item: &QaItem,
    reasoner: &R,
    critic: &C,
    strategy: &PromptStrategy,
    renderer: &DmInputRenderer,
    max_turns: usize,
) -> Result<InferenceOutcome<F>, InferenceError>
where
    F: Scalar,
    R: Reasoner + ?Sized,
    C: Critic<F> + ?Sized,
{
    if max_turns == 0 {
        return Err(InferenceError::NoTurns);
    }
    let mut context: Vec<ContextEntry> = Vec::new();
    let mut turns = Vec::new();
    for turn in 1..=max_turns {
        let messages = build_prompt(item, &context, turn, strategy)?;
        let call = ReasonerCall {
            item,
            turn,
            messages: &messages,
            params: strategy.params_for(turn),
        };
        let raw = reasoner.generate(&call)?;
        let (answer, rationale) =
            match parse_response(&raw, item.n_choices(), strategy.permits_abstain(turn)) {
                Ok(resp) => (resp.answer, resp.rationale),
                Err(_) => (Answer::Unparseable(raw.clone()), raw.clone()),
            };
        let record = TurnRecord {
            question_id: item.id.clone(),
            turn,
            context: context.clone(),
            answer,
            raw,
            rationale,
            // the renderer never reads the label
            label: Verdict::Reject,
        };
        let input = renderer.render(item, &record);
        let view = TurnView {
            question_id: &item.id,
            turn,
            answer: &record.answer,
        };
        let score = critic.assess_turn(&view, &input)?;
        turns.push(InferenceTurn {
            turn,
            answer: record.answer.clone(),
            rationale: record.rationale.clone(),
            p_accept: score.p_accept,
            verdict: score.verdict,
        });
        if score.verdict.is_accept() {
            return Ok(InferenceOutcome {
                question_id: item.id.clone(),
                final_decision: FinalDecision::Answered(record.answer),
                turns,
            });
        }
        context.push(ContextEntry::new(&record.answer, &record.rationale));
    }
    Ok(InferenceOutcome {
        question_id: item.id.clone(),
        final_decision: FinalDecision::Abstained,
        turns,
    })
}

#[derive(Serialize, Deserialize)]
struct TurnLine {
    turn: usize,
    answer: Value,
    rationale: String,
    p_accept: f64,
    verdict: Verdict,
}

#[derive(Serialize, Deserialize)]
struct OutcomeLine {
    id: String,
    #[serde(rename = "final")]
    final_decision: String,
    answer: Value,
    turns: Vec<TurnLine>,
}

pub fn outcome_to_line<F: Scalar>(outcome: &InferenceOutcome<F>) -> String {
    let (final_decision, answer) = match &outcome.final_decision {
        FinalDecision::Answered(a) => ("answered", a.to_json()),
        FinalDecision::Abstained => ("abstained", Value::Null),
    };
    let line = OutcomeLine {
        id: outcome.question_id.clone(),
        final_decision: final_decision.to_string(),
        answer,
        turns: outcome
            .turns
            .iter()
            .map(|t| TurnLine {
                turn: t.turn,
                answer: t.answer.to_json(),
                rationale: t.rationale.clone(),
                p_accept: t.p_accept.to_f64().unwrap_or(f64::NAN),
                verdict: t.verdict,
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("outcome serializes")
}

/// Parses one outcome line. Unparseable answers come back carrying the
/// rationale (which holds the raw completion) as their payload.
pub fn outcome_from_line<F: Scalar>(text: &str) -> Result<InferenceOutcome<F>, String> {
    let line: OutcomeLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let turns = line
        .turns
        .into_iter()
        .map(|t| {
            let answer = Answer::from_json(&t.answer, &t.rationale)
                .ok_or_else(|| format!("bad answer {}", t.answer))?;
            Ok(InferenceTurn {
                turn: t.turn,
                answer,
                rationale: t.rationale,
                p_accept: F::from_f64(t.p_accept).ok_or("bad p_accept")?,
                verdict: t.verdict,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let final_decision = match line.final_decision.as_str() {
        "abstained" => FinalDecision::Abstained,
        "answered" => {
            let raw = turns.last().map(|t| t.rationale.as_str()).unwrap_or("");
            FinalDecision::Answered(
                Answer::from_json(&line.answer, raw)
                    .ok_or_else(|| format!("bad answer {}", line.answer))?,
            )
        }
        other => return Err(format!("bad final {other:?}")),
    };
    Ok(InferenceOutcome {
        question_id: line.id,
        final_decision,
        turns,
    })
}

pub fn read_outcomes<F: Scalar>(
    path: impl AsRef<Path>,
) -> Result<Vec<InferenceOutcome<F>>, InferenceError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| InferenceError::Io {
        path: p.clone(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            outcome_from_line(l).map_err(|reason| InferenceError::Format {
                path: p.clone(),
                line: i + 1,
                reason,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferSummary {
    pub n: usize,
    pub n_skipped: usize,
    pub n_answered: usize,
    pub n_abstained: usize,
    pub n_failed: usize,
}

/// Runs the loop over a dataset, appending outcomes to `out_path` and
/// skipping ids already present there.
#[allow(clippy::too_many_arguments)]
pub fn infer_dataset<F, R, C>(
    dataset: &Dataset,
    reasoner: &R,
    critic: &C,
    strategy: &PromptStrategy,
    renderer: &DmInputRenderer,
    max_turns: usize,
    out_path: impl AsRef<Path>,
    worker_limit: usize,
) -> Result<InferSummary, InferenceError>
where
    F: Scalar,
    R: Reasoner + ?Sized,
    C: Critic<F> + ?Sized,
{
    let out_path = out_path.as_ref();
    let p = out_path.display().to_string();
    let io = |source| InferenceError::Io {
        path: p.clone(),
        source,
    };
    let existing = read_lines_if_exists(out_path).map_err(io)?;
    let mut done = HashSet::new();
    let mut retained = Vec::new();
    for (i, line) in existing.into_iter().enumerate() {
        let outcome: InferenceOutcome<F> =
            outcome_from_line(&line).map_err(|reason| InferenceError::Format {
                path: p.clone(),
                line: i + 1,
                reason,
            })?;
        if done.insert(outcome.question_id) {
            retained.push(line);
        }
    }
    let todo: Vec<&QaItem> = dataset
        .items
        .iter()
        .filter(|i| !done.contains(&i.id))
        .collect();
    let mut summary = InferSummary {
        n: dataset.len(),
        n_skipped: dataset.len() - todo.len(),
        ..Default::default()
    };
    let mut writer = AtomicJsonlWriter::create(out_path, &retained, FLUSH_EVERY).map_err(io)?;
    run_ordered(
        &todo,
        worker_limit,
        |item| infer_item::<F, R, C>(item, reasoner, critic, strategy, renderer, max_turns),
        |i, result| match result {
            Ok(outcome) => {
                match outcome.final_decision {
                    FinalDecision::Answered(_) => summary.n_answered += 1,
                    FinalDecision::Abstained => summary.n_abstained += 1,
                }
                writer.append_unit(&[outcome_to_line(&outcome)])
            }
            Err(e) => {
                log::warn!("inference for {} failed: {e}", todo[i].id);
                summary.n_failed += 1;
                Ok(())
            }
        },
    )
    .map_err(io)?;
    writer.finish().map_err(io)?;
    Ok(summary)
}

//! Reasoning-process distillation: run the reasoner on each question,
//! re-prompting with its own rejected attempts until it reaches the gold
//! answer or runs out of turns, and record every turn with an Accept/Reject
//! label derived from the gold answer.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::jsonl::{read_lines_if_exists, AtomicJsonlWriter};
use crate::pool::run_ordered;
use crate::qa_data::{Dataset, QaItem};
use crate::reasoner::{
    build_prompt, parse_response, Answer, ContextEntry, PromptStrategy, Reasoner, ReasonerCall,
};
use crate::verdict::Verdict;

/// Default turn budget during distillation.
pub const DEFAULT_GENERATION_TURNS: usize = 4;

/// Traces buffered between transactional flushes.
const FLUSH_EVERY: usize = 16;

#[derive(Debug, Error)]
pub enum DistillError {
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

/// One reasoning turn `{Q, C, A', r}` with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnRecord {
    pub question_id: String,
    /// 1-based.
    pub turn: usize,
    pub context: Vec<ContextEntry>,
    pub answer: Answer,
    pub raw: String,
    pub rationale: String,
    pub label: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminal {
    AcceptedAtTurn(usize),
    Exhausted,
    Failed(String),
}

impl Terminal {
    pub fn encode(&self) -> String {
        match self {
            Terminal::AcceptedAtTurn(k) => format!("accepted_at_turn:{k}"),
            Terminal::Exhausted => "exhausted".to_string(),
            Terminal::Failed(reason) => format!("failed:{reason}"),
        }
    }

    pub fn decode(s: &str) -> Option<Terminal> {
        if s == "exhausted" {
            return Some(Terminal::Exhausted);
        }
        if let Some(k) = s.strip_prefix("accepted_at_turn:") {
            return k.parse().ok().map(Terminal::AcceptedAtTurn);
        }
        s.strip_prefix("failed:")
            .map(|r| Terminal::Failed(r.to_string()))
    }

    /// Accepted or exhausted; failed traces are retried on resume.
    pub fn is_complete(&self) -> bool {
        !matches!(self, Terminal::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub question_id: String,
    pub records: Vec<TurnRecord>,
    pub terminal: Terminal,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceViolation {
    #[error("record {0} belongs to another question")]
    ForeignRecord(usize),
    #[error("record {index} has turn {turn}")]
    TurnGap { index: usize, turn: usize },
    #[error("record {0} context does not replay earlier turns")]
    ContextMismatch(usize),
    #[error("record {0} label disagrees with the gold answer")]
    LabelMismatch(usize),
    #[error("accept before the final record at {0}")]
    EarlyAccept(usize),
    #[error("{0} records exceed the turn budget")]
    TooManyTurns(usize),
    #[error("terminal {0:?} inconsistent with records")]
    BadTerminal(Terminal),
}

impl Trace {
    /// Checks every structural invariant against the owning item.
    pub fn validate(&self, item: &QaItem, max_turns: usize) -> Result<(), TraceViolation> {
        if self.records.len() > max_turns {
            return Err(TraceViolation::TooManyTurns(self.records.len()));
        }
        let mut expected_context: Vec<ContextEntry> = Vec::new();
        for (i, rec) in self.records.iter().enumerate() {
            if rec.question_id != self.question_id || rec.question_id != item.id {
                return Err(TraceViolation::ForeignRecord(i));
            }
            if rec.turn != i + 1 {
                return Err(TraceViolation::TurnGap {
                    index: i,
                    turn: rec.turn,
                });
            }
            if rec.context != expected_context {
                return Err(TraceViolation::ContextMismatch(i));
            }
            let derived = label_for(&rec.answer, item.gold_index);
            if derived != rec.label {
                return Err(TraceViolation::LabelMismatch(i));
            }
            if rec.label.is_accept() && i + 1 != self.records.len() {
                return Err(TraceViolation::EarlyAccept(i));
            }
            expected_context.push(ContextEntry::new(&rec.answer, &rec.rationale));
        }
        let last_accept = self.records.last().map(|r| r.label.is_accept());
        let ok = match &self.terminal {
            Terminal::AcceptedAtTurn(k) => last_accept == Some(true) && *k == self.records.len(),
            Terminal::Exhausted => last_accept == Some(false) && self.records.len() == max_turns,
            Terminal::Failed(_) => last_accept != Some(true),
        };
        if ok {
            Ok(())
        } else {
            Err(TraceViolation::BadTerminal(self.terminal.clone()))
        }
    }
}

/// Accept iff the answer is exactly the gold index.
pub fn label_for(answer: &Answer, gold_index: usize) -> Verdict {
    if answer.is_index(gold_index) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// Distills one question.
pub fn distill_item<R: Reasoner + ?Sized>(
    item: &QaItem,
    reasoner: &R,
    strategy: &PromptStrategy,
    max_turns: usize,
) -> Trace {
    let mut records = Vec::new();
    let mut context: Vec<ContextEntry> = Vec::new();
    let failed = |records, reason: String| Trace {
        question_id: item.id.clone(),
        records,
        terminal: Terminal::Failed(reason),
    };
    if max_turns == 0 {
        return failed(records, "max_turns must be at least 1".into());
    }

    for turn in 1..=max_turns {
        let messages = match build_prompt(item, &context, turn, strategy) {
            Ok(m) => m,
            Err(e) => return failed(records, e.to_string()),
        };
        let call = ReasonerCall {
            item,
            turn,
            messages: &messages,
            params: strategy.params_for(turn),
        };
        let raw = match reasoner.generate(&call) {
            Ok(text) => text,
            Err(e) => return failed(records, e.to_string()),
        };
        let (answer, rationale) =
            match parse_response(&raw, item.n_choices(), strategy.permits_abstain(turn)) {
                Ok(resp) => (resp.answer, resp.rationale),
                Err(_) => (Answer::Unparseable(raw.clone()), raw.clone()),
            };
        let label = label_for(&answer, item.gold_index);
        let entry = ContextEntry::new(&answer, &rationale);
        records.push(TurnRecord {
            question_id: item.id.clone(),
            turn,
            context: context.clone(),
            answer,
            raw,
            rationale,
            label,
        });
        if label.is_accept() {
            return Trace {
                question_id: item.id.clone(),
                records,
                terminal: Terminal::AcceptedAtTurn(turn),
            };
        }
        context.push(entry);
    }
    Trace {
        question_id: item.id.clone(),
        records,
        terminal: Terminal::Exhausted,
    }
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    id: String,
    turn: usize,
    context: Vec<ContextEntry>,
    answer: Value,
    raw: String,
    rationale: String,
    label: Verdict,
    terminal: Option<String>,
}

/// JSONL lines for a trace; the terminal tag rides on the last record.
pub fn trace_to_lines(trace: &Trace) -> Vec<String> {
    let n = trace.records.len();
    trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let line = TraceLine {
                id: r.question_id.clone(),
                turn: r.turn,
                context: r.context.clone(),
                answer: r.answer.to_json(),
                raw: r.raw.clone(),
                rationale: r.rationale.clone(),
                label: r.label,
                terminal: (i + 1 == n).then(|| trace.terminal.encode()),
            };
            serde_json::to_string(&line).expect("trace line serializes")
        })
        .collect()
}

/// Groups consecutive lines by id. The second element of each pair is the
/// raw lines, so callers can rewrite files without re-serializing.
fn parse_trace_lines(
    lines: &[String],
    path: &str,
) -> Result<Vec<(Trace, bool, Vec<String>)>, DistillError> {
    let mut out: Vec<(Trace, bool, Vec<String>)> = Vec::new();
    for (i, text) in lines.iter().enumerate() {
        let fmt = |reason: String| DistillError::Format {
            path: path.to_string(),
            line: i + 1,
            reason,
        };
        let line: TraceLine = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
        let answer = Answer::from_json(&line.answer, &line.raw)
            .ok_or_else(|| fmt(format!("bad answer value {}", line.answer)))?;
        let terminal = match &line.terminal {
            Some(t) => Some(Terminal::decode(t).ok_or_else(|| fmt(format!("bad terminal {t:?}")))?),
            None => None,
        };
        let record = TurnRecord {
            question_id: line.id.clone(),
            turn: line.turn,
            context: line.context,
            answer,
            raw: line.raw,
            rationale: line.rationale,
            label: line.label,
        };
        let continues =
            matches!(out.last(), Some((t, closed, _)) if !closed && t.question_id == line.id);
        if !continues {
            out.push((
                Trace {
                    question_id: line.id.clone(),
                    records: Vec::new(),
                    terminal: Terminal::Failed("incomplete".into()),
                },
                false,
                Vec::new(),
            ));
        }
        let (trace, closed, raw_lines) = out.last_mut().expect("just pushed");
        trace.records.push(record);
        raw_lines.push(text.clone());
        if let Some(t) = terminal {
            trace.terminal = t;
            *closed = true;
        }
    }
    Ok(out)
}

/// Reads every trace in a trace file, including failed and incomplete ones
/// (the latter reported as `Failed("incomplete")`).
pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<Trace>, DistillError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DistillError::Io {
        path: p.clone(),
        source,
    })?;
    let lines: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    Ok(parse_trace_lines(&lines, &p)?
        .into_iter()
        .map(|(t, _, _)| t)
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub n_items: usize,
    pub n_skipped: usize,
    pub n_accepted: usize,
    pub n_exhausted: usize,
    pub n_failed: usize,
    /// Records written by this run.
    pub n_records: usize,
}

/// Distills a whole dataset into `out_path`, resuming from whatever
/// complete traces the file already holds.
pub fn distill_dataset<R: Reasoner + ?Sized>(
    dataset: &Dataset,
    reasoner: &R,
    strategy: &PromptStrategy,
    max_turns: usize,
    out_path: impl AsRef<Path>,
    worker_limit: usize,
) -> Result<DistillSummary, DistillError> {
    let out_path = out_path.as_ref();
    let p = out_path.display().to_string();
    let io = |source| DistillError::Io {
        path: p.clone(),
        source,
    };

    let existing = read_lines_if_exists(out_path).map_err(io)?;
    let mut done = std::collections::HashSet::new();
    let mut retained = Vec::new();
    for (trace, closed, lines) in parse_trace_lines(&existing, &p)? {
        if closed && trace.terminal.is_complete() && done.insert(trace.question_id.clone()) {
            retained.extend(lines);
        }
    }

    let todo: Vec<&QaItem> = dataset
        .items
        .iter()
        .filter(|i| !done.contains(&i.id))
        .collect();
    let mut summary = DistillSummary {
        n_items: dataset.len(),
        n_skipped: dataset.len() - todo.len(),
        ..Default::default()
    };

    let mut writer = AtomicJsonlWriter::create(out_path, &retained, FLUSH_EVERY).map_err(io)?;
    run_ordered(
        &todo,
        worker_limit,
        |item| distill_item(item, reasoner, strategy, max_turns),
        |_, trace| {
            match &trace.terminal {
                Terminal::AcceptedAtTurn(_) => summary.n_accepted += 1,
                Terminal::Exhausted => summary.n_exhausted += 1,
                Terminal::Failed(reason) => {
                    log::warn!("trace for {} failed: {reason}", trace.question_id);
                    summary.n_failed += 1;
                }
            }
            summary.n_records += trace.records.len();
            writer.append_unit(&trace_to_lines(&trace))
        },
    )
    .map_err(io)?;
    writer.finish().map_err(io)?;
    Ok(summary)
}

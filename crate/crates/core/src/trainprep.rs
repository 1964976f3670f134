//! Turns distilled traces into the critic's labeled training corpus.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distill::{Trace, TurnRecord};
use crate::jsonl::write_atomic;
use crate::qa_data::{Dataset, QaItem};
use crate::reasoner::{render_choices, StrategyKind};
use crate::verdict::Verdict;

pub const DEFAULT_DM_INSTRUCTION: &str = "Predict if the following answer to the question and context should be accepted, 1, or rejected, 0, based on the rationale.";
pub const DEFAULT_REJECT_PER_ACCEPT: f64 = 1.0;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum PrepError {
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
    #[error("trace for unknown question {0:?}")]
    UnknownQuestion(String),
}

/// Renders `{Q, C, A', r}` into the exact text the critic sees. Shared by
/// corpus preparation and the inference loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmInputRenderer {
    pub instruction: String,
    pub kind: StrategyKind,
}

impl DmInputRenderer {
    pub fn new(instruction: impl Into<String>, kind: StrategyKind) -> Self {
        DmInputRenderer {
            instruction: instruction.into(),
            kind,
        }
    }

    pub fn render(&self, item: &QaItem, record: &TurnRecord) -> String {
        render_dm_input(item, record, &self.instruction, self.kind)
    }
}

/// Segments joined by single newlines; each segment is right-trimmed.
pub fn render_dm_input(
    item: &QaItem,
    record: &TurnRecord,
    instruction: &str,
    kind: StrategyKind,
) -> String {
    let mut segments: Vec<String> = vec![
        instruction.to_string(),
        format!("Question: {}", item.question),
        format!("Choices: {}.", render_choices(&item.choices)),
    ];
    for entry in &record.context {
        segments.push(format!("Previous LLM Response: Answer: {}", entry.answer));
        segments.push(format!("Rationale: {}", entry.rationale));
        segments.push(kind.feedback_line().to_string());
    }
    segments.push(format!("Answer: {}", record.answer.token()));
    segments.push(format!("Rationale: {}", record.rationale));
    segments
        .iter()
        .map(|s| s.trim_end())
        .collect::<Vec<_>>()
        .join("\n")
}

/// One labeled critic example. Serialized as `{"id", "turn", "input", "label"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmExample {
    #[serde(rename = "id")]
    pub question_id: String,
    pub turn: usize,
    #[serde(rename = "input")]
    pub input_text: String,
    pub label: u8,
}

impl DmExample {
    pub fn from_record(item: &QaItem, record: &TurnRecord, renderer: &DmInputRenderer) -> Self {
        DmExample {
            question_id: record.question_id.clone(),
            turn: record.turn,
            input_text: renderer.render(item, record),
            label: record.label.as_label(),
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.label == 1 {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    pub records: Vec<TurnRecord>,
    pub n_accept: usize,
    pub n_reject_before: usize,
    pub n_reject_kept: usize,
    pub warning: Option<String>,
}

/// Keeps every Accept record and a seeded uniform sample of
/// `round(reject_per_accept * n_accept)` Reject records, in original order.
pub fn downsample(records: &[TurnRecord], reject_per_accept: f64, seed: u64) -> Downsampled {
    let reject_positions: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.label.is_accept())
        .map(|(i, _)| i)
        .collect();
    let n_accept = records.len() - reject_positions.len();
    let target = (reject_per_accept.max(0.0) * n_accept as f64).round() as usize;

    let mut keep = vec![true; records.len()];
    let n_reject_kept = if target >= reject_positions.len() {
        reject_positions.len()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen: HashSet<usize> = index::sample(&mut rng, reject_positions.len(), target)
            .into_iter()
            .collect();
        for (k, &pos) in reject_positions.iter().enumerate() {
            keep[pos] = chosen.contains(&k);
        }
        target
    };
    let warning = (n_accept == 0 && !reject_positions.is_empty()).then(|| {
        format!(
            "no Accept records; all {} Reject records dropped",
            reject_positions.len()
        )
    });
    Downsampled {
        records: records
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.clone())
            .collect(),
        n_accept,
        n_reject_before: reject_positions.len(),
        n_reject_kept,
        warning,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Vec<DmExample>,
    pub dev: Vec<DmExample>,
}

impl SplitCorpus {
    pub fn extend(&mut self, other: SplitCorpus) {
        self.train.extend(other.train);
        self.dev.extend(other.dev);
    }
}

/// Splits by question id: ids are shuffled with `seed` and the first
/// `round(train_fraction * n_ids)` go to train. Example order is preserved.
pub fn split(examples: &[DmExample], train_fraction: f64, seed: u64) -> SplitCorpus {
    let mut seen = HashSet::new();
    let mut ids: Vec<&str> = examples
        .iter()
        .map(|e| e.question_id.as_str())
        .filter(|id| seen.insert(*id))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((train_fraction * ids.len() as f64).round() as usize).min(ids.len());
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();

    let (train, dev) = examples
        .iter()
        .cloned()
        .partition(|e| train_ids.contains(e.question_id.as_str()));
    SplitCorpus { train, dev }
}

pub fn export_training_file(
    examples: &[DmExample],
    path: impl AsRef<Path>,
) -> Result<usize, PrepError> {
    let path = path.as_ref();
    let mut buf = String::new();
    for e in examples {
        buf.push_str(&serde_json::to_string(e).expect("example serializes"));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes()).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(examples.len())
}

pub fn read_training_file(path: impl AsRef<Path>) -> Result<Vec<DmExample>, PrepError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: p.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: DmExample = serde_json::from_str(line).map_err(|err| PrepError::Format {
            path: p.clone(),
            line: i + 1,
            reason: err.to_string(),
        })?;
        if e.label > 1 {
            return Err(PrepError::Format {
                path: p.clone(),
                line: i + 1,
                reason: format!("label {} not in {{0, 1}}", e.label),
            });
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    pub reject_per_accept: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub renderer: DmInputRenderer,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            reject_per_accept: DEFAULT_REJECT_PER_ACCEPT,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
            renderer: DmInputRenderer::new(DEFAULT_DM_INSTRUCTION, StrategyKind::Direct),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub dataset: String,
    pub n_traces: usize,
    pub n_traces_skipped: usize,
    pub n_accept: usize,
    pub n_reject_before: usize,
    pub n_reject_kept: usize,
    pub n_train: usize,
    pub n_dev: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Prepares one dataset's traces: down-sample, render, split. Failed or
/// incomplete traces are left out.
pub fn prepare_dataset(
    dataset: &Dataset,
    traces: &[Trace],
    config: &PrepConfig,
) -> Result<(SplitCorpus, PrepSummary), PrepError> {
    let items: std::collections::HashMap<&str, &QaItem> =
        dataset.items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut records = Vec::new();
    let mut skipped = 0;
    for trace in traces {
        if !items.contains_key(trace.question_id.as_str()) {
            return Err(PrepError::UnknownQuestion(trace.question_id.clone()));
        }
        if trace.terminal.is_complete() {
            records.extend(trace.records.iter().cloned());
        } else {
            skipped += 1;
        }
    }
    let sampled = downsample(&records, config.reject_per_accept, config.seed);
    let examples: Vec<DmExample> = sampled
        .records
        .iter()
        .map(|r| DmExample::from_record(items[r.question_id.as_str()], r, &config.renderer))
        .collect();
    let corpus = if examples.is_empty() {
        SplitCorpus::default()
    } else {
        split(&examples, config.train_fraction, config.seed)
    };
    let summary = PrepSummary {
        dataset: dataset.name.clone(),
        n_traces: traces.len(),
        n_traces_skipped: skipped,
        n_accept: sampled.n_accept,
        n_reject_before: sampled.n_reject_before,
        n_reject_kept: sampled.n_reject_kept,
        n_train: corpus.train.len(),
        n_dev: corpus.dev.len(),
        warnings: sampled.warning.into_iter().collect(),
    };
    Ok((corpus, summary))
}

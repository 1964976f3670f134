//! Multiple-choice QA datasets in the normalized JSONL schema.
//!
//! Each line is one object `{"id", "question", "choices", "answer_index"}`;
//! extra fields are ignored.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate question id {0:?}")]
    DuplicateId(String),
    #[error("gold answer index out of range for question {0:?}")]
    GoldIndexOutOfRange(String),
    #[error("dataset {0:?} has no items")]
    Empty(String),
}

/// One multiple-choice question with its gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold_index: usize,
}

impl QaItem {
    /// Builds an item, checking the per-item invariants.
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        choices: Vec<String>,
        gold_index: usize,
    ) -> Result<Self, DataError> {
        let item = QaItem {
            id: id.into(),
            question: question.into(),
            choices,
            gold_index,
        };
        item.validate(0)?;
        Ok(item)
    }

    pub fn n_choices(&self) -> usize {
        self.choices.len()
    }

    fn validate(&self, line: usize) -> Result<(), DataError> {
        if self.choices.len() < 2 {
            return Err(DataError::MalformedLine {
                line,
                reason: format!("question {:?} needs at least two choices", self.id),
            });
        }
        if let Some(pos) = self.choices.iter().position(|c| c.is_empty()) {
            return Err(DataError::MalformedLine {
                line,
                reason: format!("question {:?} has an empty choice at index {pos}", self.id),
            });
        }
        if self.gold_index >= self.choices.len() {
            return Err(DataError::GoldIndexOutOfRange(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawItem {
    id: String,
    question: String,
    choices: Vec<String>,
    answer_index: i64,
}

/// A named, ordered, non-empty collection of uniquely identified items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<QaItem>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, items: Vec<QaItem>) -> Result<Self, DataError> {
        let name = name.into();
        if items.is_empty() {
            return Err(DataError::Empty(name));
        }
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(DataError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Dataset { name, items })
    }

    pub fn get(&self, id: &str) -> Option<&QaItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Serializes back to the JSONL schema accepted by [`parse_dataset`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let line = serde_json::json!({
                "id": item.id,
                "question": item.question,
                "choices": item.choices,
                "answer_index": item.gold_index,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Generated questions with seeded gold indices, for simulations and tests.
/// Ids are `"{name}-{i}"`.
pub fn synthetic_dataset(
    name: &str,
    n: usize,
    n_choices: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|i| {
            let choices = (0..n_choices)
                .map(|c| format!("option {c} of question {i}"))
                .collect();
            let gold = rng.random_range(0..n_choices.max(1));
            QaItem::new(
                format!("{name}-{i}"),
                format!("Synthetic question number {i}?"),
                choices,
                gold,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(name, items)
}

/// Parses dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str, name: &str) -> Result<Dataset, DataError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(line).map_err(|e| DataError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(DataError::DuplicateId(raw.id));
        }
        let gold_index = usize::try_from(raw.answer_index)
            .map_err(|_| DataError::GoldIndexOutOfRange(raw.id.clone()))?;
        let item = QaItem {
            id: raw.id,
            question: raw.question,
            choices: raw.choices,
            gold_index,
        };
        item.validate(line_no)?;
        items.push(item);
    }
    Dataset::new(name, items)
}

pub fn load_dataset(path: impl AsRef<Path>, name: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, name)
}

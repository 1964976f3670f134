use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Reasoner, ReasonerCall, ReasonerError};

/// One fixture line: `{"id", "turn", "text"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub id: String,
    pub turn: usize,
    pub text: String,
}

/// Replays completions keyed by (question id, turn).
#[derive(Debug, Clone, Default)]
pub struct ScriptedReasoner {
    table: HashMap<(String, usize), String>,
}

impl ScriptedReasoner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: &str, turn: usize, text: &str) -> Self {
        self.insert(id, turn, text);
        self
    }

    pub fn insert(&mut self, id: &str, turn: usize, text: &str) {
        self.table.insert((id.to_string(), turn), text.to_string());
    }

    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let table = entries
            .into_iter()
            .map(|e| ((e.id, e.turn), e.text))
            .collect();
        ScriptedReasoner { table }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReasonerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ReasonerError::Fixture(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| {
                ReasonerError::Fixture(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Reasoner for ScriptedReasoner {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        if call.messages.is_empty() {
            return Err(ReasonerError::EmptyMessages);
        }
        self.table
            .get(&(call.item.id.clone(), call.turn))
            .cloned()
            .ok_or_else(|| ReasonerError::FixtureMissing {
                id: call.item.id.clone(),
                turn: call.turn,
            })
    }
}

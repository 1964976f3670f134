//! The generative reasoner: prompt construction, response parsing, and the
//! backends that turn a message list into completion text.

mod parse;
mod prompt;
mod recording;
mod remote;
mod scripted;
mod stochastic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qa_data::QaItem;

pub use parse::{parse_response, ParseError};
pub use prompt::{
    build_prompt, render_choices, PromptError, ABSTAIN_QA_PROMPT, DIRECT_FEEDBACK,
    EXPLORATION_PROMPT, GRADUAL_FEEDBACK, STANDARD_QA_PROMPT_DIRECT, STANDARD_QA_PROMPT_GRADUAL,
};
pub use recording::{RecordedCall, RecordingReasoner};
pub use remote::{RemoteChatConfig, RemoteChatReasoner, RetryPolicy, API_KEY_ENV};
pub use scripted::{FixtureEntry, ScriptedReasoner};
pub use stochastic::StochasticSimReasoner;

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 512;

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("remote error (status {status:?}): {body}")]
    Remote { status: Option<u16>, body: String },
    #[error("no fixture for question {id:?} turn {turn}")]
    FixtureMissing { id: String, turn: usize },
    #[error("fixture file: {0}")]
    Fixture(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("empty message list")]
    EmptyMessages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationParams {
    pub fn new(temperature: f64, top_p: f64) -> Result<Self, ReasonerError> {
        let params = GenerationParams {
            temperature,
            top_p,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            seed: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ReasonerError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ReasonerError::InvalidParams(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ReasonerError::InvalidParams(format!(
                "top_p {} must lie in (0, 1]",
                self.top_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(ReasonerError::InvalidParams(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    fn fixed(temperature: f64, top_p: f64) -> Self {
        GenerationParams {
            temperature,
            top_p,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Standard prompt on turn 1, exploration prompt plus explicit
    /// wrong-answer feedback afterwards.
    Direct,
    /// Standard prompt on every turn with a softer environment message.
    Gradual,
}

impl StrategyKind {
    /// Environment line appended after every rejected (answer, rationale) pair.
    pub fn feedback_line(self) -> &'static str {
        match self {
            StrategyKind::Direct => DIRECT_FEEDBACK,
            StrategyKind::Gradual => GRADUAL_FEEDBACK,
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(StrategyKind::Direct),
            "gradual" => Ok(StrategyKind::Gradual),
            other => Err(format!(
                "unknown strategy {other:?} (expected direct|gradual)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub kind: StrategyKind,
    pub turn1_params: GenerationParams,
    pub later_params: GenerationParams,
    pub allow_abstain_token: bool,
}

impl PromptStrategy {
    /// Direct strategy: turn 1 at temperature 0.1 / top-p 0.9, later turns 0.6 / 0.7.
    pub fn direct() -> Self {
        PromptStrategy {
            kind: StrategyKind::Direct,
            turn1_params: GenerationParams::fixed(0.1, 0.9),
            later_params: GenerationParams::fixed(0.6, 0.7),
            allow_abstain_token: false,
        }
    }

    /// Gradual strategy: temperature 0.6 / top-p 0.9 on every turn.
    pub fn gradual() -> Self {
        PromptStrategy {
            kind: StrategyKind::Gradual,
            turn1_params: GenerationParams::fixed(0.6, 0.9),
            later_params: GenerationParams::fixed(0.6, 0.9),
            allow_abstain_token: false,
        }
    }

    pub fn for_kind(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::Direct => Self::direct(),
            StrategyKind::Gradual => Self::gradual(),
        }
    }

    pub fn params_for(&self, turn: usize) -> &GenerationParams {
        if turn <= 1 {
            &self.turn1_params
        } else {
            &self.later_params
        }
    }

    /// System prompt for the given 1-based turn.
    pub fn system_prompt(&self, turn: usize) -> &'static str {
        match (self.kind, turn <= 1) {
            (StrategyKind::Direct, false) => EXPLORATION_PROMPT,
            _ if self.allow_abstain_token => ABSTAIN_QA_PROMPT,
            (StrategyKind::Direct, true) => STANDARD_QA_PROMPT_DIRECT,
            (StrategyKind::Gradual, _) => STANDARD_QA_PROMPT_GRADUAL,
        }
    }

    /// Whether the system prompt at this turn offers "none of the above".
    pub fn permits_abstain(&self, turn: usize) -> bool {
        self.allow_abstain_token || (self.kind == StrategyKind::Direct && turn > 1)
    }

    pub fn feedback_line(&self) -> &'static str {
        self.kind.feedback_line()
    }
}

impl Default for PromptStrategy {
    fn default() -> Self {
        Self::direct()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A reasoner's answer to one turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Answer {
    Index(usize),
    NoneOfTheAbove,
    /// The response carried no usable answer; holds the raw completion.
    Unparseable(String),
}

/// Answer token used for unparseable turns in prompts and critic inputs.
pub const UNPARSEABLE_TOKEN: &str = "[unparseable]";
const NONE_OF_THE_ABOVE_TEXT: &str = "none of the above";

impl Answer {
    /// Text form shown to the reasoner and the critic.
    pub fn token(&self) -> String {
        match self {
            Answer::Index(i) => i.to_string(),
            Answer::NoneOfTheAbove => NONE_OF_THE_ABOVE_TEXT.to_string(),
            Answer::Unparseable(_) => UNPARSEABLE_TOKEN.to_string(),
        }
    }

    pub fn is_index(&self, gold: usize) -> bool {
        matches!(self, Answer::Index(i) if *i == gold)
    }

    /// JSON form: integer index, `"none_of_the_above"`, or `null`.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Answer::Index(i) => serde_json::Value::from(*i),
            Answer::NoneOfTheAbove => serde_json::Value::from("none_of_the_above"),
            Answer::Unparseable(_) => serde_json::Value::Null,
        }
    }

    /// Inverse of [`Answer::to_json`]; `raw` fills the unparseable payload.
    pub fn from_json(value: &serde_json::Value, raw: &str) -> Option<Answer> {
        match value {
            serde_json::Value::Null => Some(Answer::Unparseable(raw.to_string())),
            serde_json::Value::String(s) if s == "none_of_the_above" => {
                Some(Answer::NoneOfTheAbove)
            }
            serde_json::Value::Number(n) => n.as_u64().map(|i| Answer::Index(i as usize)),
            _ => None,
        }
    }
}

/// One prior (answer, rationale) pair carried in the context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub answer: String,
    pub rationale: String,
}

impl ContextEntry {
    pub fn new(answer: &Answer, rationale: &str) -> Self {
        ContextEntry {
            answer: answer.token(),
            rationale: rationale.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasonerResponse {
    pub answer: Answer,
    pub rationale: String,
    pub raw_text: String,
}

/// Everything a backend sees for one generation. `item` and `turn` are
/// side-band metadata for replay and simulation backends; remote backends
/// only forward `messages` and `params`.
#[derive(Debug, Clone, Copy)]
pub struct ReasonerCall<'a> {
    pub item: &'a QaItem,
    pub turn: usize,
    pub messages: &'a [ChatMessage],
    pub params: &'a GenerationParams,
}

pub trait Reasoner: Send + Sync {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError>;
}

impl<R: Reasoner + ?Sized> Reasoner for &R {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        (**self).generate(call)
    }
}

impl<R: Reasoner + ?Sized> Reasoner for Box<R> {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        (**self).generate(call)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedules() {
        let d = PromptStrategy::direct();
        assert_eq!(
            (d.params_for(1).temperature, d.params_for(1).top_p),
            (0.1, 0.9)
        );
        for t in 2..6 {
            assert_eq!(
                (d.params_for(t).temperature, d.params_for(t).top_p),
                (0.6, 0.7)
            );
        }
        let g = PromptStrategy::gradual();
        for t in 1..6 {
            assert_eq!(
                (g.params_for(t).temperature, g.params_for(t).top_p),
                (0.6, 0.9)
            );
        }
        assert_eq!(d.params_for(1).max_new_tokens, 512);
    }

    #[test]
    fn params_validation() {
        assert!(GenerationParams::new(0.0, 1.0).is_ok());
        assert!(GenerationParams::new(-0.1, 0.9).is_err());
        assert!(GenerationParams::new(0.5, 0.0).is_err());
        assert!(GenerationParams::new(0.5, 1.1).is_err());
        assert!(GenerationParams::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn answer_json_roundtrip() {
        for a in [
            Answer::Index(3),
            Answer::NoneOfTheAbove,
            Answer::Unparseable("x".into()),
        ] {
            assert_eq!(Answer::from_json(&a.to_json(), "x"), Some(a));
        }
        assert_eq!(Answer::from_json(&serde_json::json!("b"), ""), None);
    }

    #[test]
    fn abstain_permission() {
        let mut d = PromptStrategy::direct();
        assert!(!d.permits_abstain(1));
        assert!(d.permits_abstain(2));
        let g = PromptStrategy::gradual();
        assert!(!g.permits_abstain(3));
        d.allow_abstain_token = true;
        assert!(d.permits_abstain(1));
        assert_eq!(d.system_prompt(1), ABSTAIN_QA_PROMPT);
        assert_eq!(d.system_prompt(2), EXPLORATION_PROMPT);
    }
}

//! Run configuration: one TOML document, overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{DEFAULT_HASH_DIM, DEFAULT_THRESHOLD};
use crate::distill::DEFAULT_GENERATION_TURNS;
use crate::inference::DEFAULT_INFERENCE_TURNS;
use crate::reasoner::{GenerationParams, PromptStrategy, StrategyKind, DEFAULT_MAX_NEW_TOKENS};
use crate::trainprep::{DEFAULT_DM_INSTRUCTION, DEFAULT_REJECT_PER_ACCEPT, DEFAULT_TRAIN_FRACTION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
}

impl FromStr for DatasetSpec {
    type Err = String;

    /// `name=path`, or a bare path whose file stem becomes the name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty dataset spec".into());
        }
        match s.split_once('=') {
            Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok(DatasetSpec {
                name: name.to_string(),
                path: PathBuf::from(path),
            }),
            Some(_) => Err(format!("bad dataset spec {s:?}; expected name=path")),
            None => {
                let path = PathBuf::from(s);
                let name = path
                    .file_stem()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| s.to_string());
                Ok(DatasetSpec { name, path })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
    Sim,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "remote" => Ok(BackendKind::Remote),
            "scripted" => Ok(BackendKind::Scripted),
            "sim" | "stochastic" => Ok(BackendKind::Sim),
            other => Err(format!(
                "unknown backend {other:?} (expected remote|scripted|sim)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub backend: BackendKind,
    pub url: Option<String>,
    pub model: Option<String>,
    pub fixture: Option<PathBuf>,
    /// Probability of a correct answer for the simulated backend.
    pub p_correct: f64,
    pub max_in_flight: usize,
    pub max_new_tokens: u32,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            backend: BackendKind::Scripted,
            url: None,
            model: None,
            fixture: None,
            p_correct: 0.5,
            max_in_flight: 4,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub allow_abstain: bool,
    /// Overrides the kind's turn-1 sampling.
    pub turn1: Option<SamplingConfig>,
    /// Overrides the kind's sampling for turns >= 2.
    pub later: Option<SamplingConfig>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Direct,
            allow_abstain: false,
            turn1: None,
            later: None,
        }
    }
}

/// Which critic judges turns at inference time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CriticSpec {
    Oracle,
    AlwaysAccept,
    AlwaysReject,
    Linear(PathBuf),
    Remote(String),
}

impl FromStr for CriticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(CriticSpec::Oracle),
            "accept" | "always-accept" => Ok(CriticSpec::AlwaysAccept),
            "reject" | "always-reject" => Ok(CriticSpec::AlwaysReject),
            _ => {
                if let Some(p) = s.strip_prefix("linear:").filter(|p| !p.is_empty()) {
                    Ok(CriticSpec::Linear(PathBuf::from(p)))
                } else if let Some(u) = s.strip_prefix("remote:").filter(|u| !u.is_empty()) {
                    Ok(CriticSpec::Remote(u.to_string()))
                } else {
                    Err(format!(
                        "unknown critic {s:?} (expected oracle|accept|reject|linear:<path>|remote:<url>)"
                    ))
                }
            }
        }
    }
}

impl std::fmt::Display for CriticSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriticSpec::Oracle => write!(f, "oracle"),
            CriticSpec::AlwaysAccept => write!(f, "accept"),
            CriticSpec::AlwaysReject => write!(f, "reject"),
            CriticSpec::Linear(p) => write!(f, "linear:{}", p.display()),
            CriticSpec::Remote(u) => write!(f, "remote:{u}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSettings {
    pub reject_per_accept: f64,
    pub train_fraction: f64,
    pub instruction: String,
}

impl Default for PrepSettings {
    fn default() -> Self {
        PrepSettings {
            reject_per_accept: DEFAULT_REJECT_PER_ACCEPT,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            instruction: DEFAULT_DM_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub w_reject: f64,
    pub w_accept: f64,
    pub hash_dim: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lr: 0.5,
            epochs: 5,
            w_reject: 3.0,
            w_accept: 1.0,
            hash_dim: DEFAULT_HASH_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub n: usize,
    pub n_choices: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            n: 10_000,
            n_choices: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub datasets: Vec<DatasetSpec>,
    pub reasoner: ReasonerConfig,
    pub strategy: StrategyConfig,
    pub max_turns_generation: usize,
    pub max_turns_inference: usize,
    /// `oracle | accept | reject | linear:<path> | remote:<url>`
    pub critic: String,
    pub critic_threshold: f64,
    pub prep: PrepSettings,
    pub train: TrainSettings,
    pub ks: Vec<f64>,
    pub simulate: SimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("drr-out"),
            seed: 0,
            workers: 4,
            datasets: Vec::new(),
            reasoner: ReasonerConfig::default(),
            strategy: StrategyConfig::default(),
            max_turns_generation: DEFAULT_GENERATION_TURNS,
            max_turns_inference: DEFAULT_INFERENCE_TURNS,
            critic: "oracle".to_string(),
            critic_threshold: DEFAULT_THRESHOLD,
            prep: PrepSettings::default(),
            train: TrainSettings::default(),
            ks: vec![1.0, 3.0],
            simulate: SimSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn critic_spec(&self) -> Result<CriticSpec, ConfigError> {
        self.critic.parse().map_err(ConfigError::Invalid)
    }

    /// The prompt strategy with kind defaults and any sampling overrides.
    pub fn prompt_strategy(&self) -> Result<PromptStrategy, ConfigError> {
        let mut s = PromptStrategy::for_kind(self.strategy.kind);
        s.allow_abstain_token = self.strategy.allow_abstain;
        let apply = |p: &mut GenerationParams, o: Option<SamplingConfig>| {
            if let Some(o) = o {
                p.temperature = o.temperature;
                p.top_p = o.top_p;
            }
        };
        apply(&mut s.turn1_params, self.strategy.turn1);
        apply(&mut s.later_params, self.strategy.later);
        for p in [&mut s.turn1_params, &mut s.later_params] {
            p.max_new_tokens = self.reasoner.max_new_tokens;
        }
        s.turn1_params
            .validate()
            .and_then(|_| s.later_params.validate())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.max_turns_generation == 0 || self.max_turns_inference == 0 {
            return bad("turn budgets must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.prep.train_fraction > 0.0 && self.prep.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction {} must lie in (0, 1)",
                self.prep.train_fraction
            ));
        }
        if self.prep.reject_per_accept.is_nan() || self.prep.reject_per_accept <= 0.0 {
            return bad("reject_per_accept must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.reasoner.p_correct) {
            return bad(format!(
                "p_correct {} outside [0, 1]",
                self.reasoner.p_correct
            ));
        }
        if !(self.critic_threshold > 0.0 && self.critic_threshold < 1.0) {
            return bad(format!(
                "critic_threshold {} must lie in (0, 1)",
                self.critic_threshold
            ));
        }
        if self.ks.iter().any(|k| k.is_nan() || *k <= 0.0) {
            return bad("formula-score penalties must be positive".into());
        }
        if self.simulate.n_choices < 2 {
            return bad("simulated questions need at least two choices".into());
        }
        self.critic_spec()?;
        self.prompt_strategy()?;
        Ok(())
    }
}

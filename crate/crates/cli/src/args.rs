//! Flags and their merge onto the config file. Precedence: flags, then the
//! `--config` file, then built-in defaults.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use drr_core::config::{BackendKind, DatasetSpec, RunConfig};
use drr_core::reasoner::StrategyKind;

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "drr",
    version,
    about = "Critic-gated multi-turn reasoning for multiple-choice QA"
)]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> &'static str {
        if self.quiet {
            "warn"
        } else {
            "info"
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the reasoner over training questions and record labeled traces.
    Distill(DistillArgs),
    /// Render, rebalance and split traces into the critic corpus.
    Prepare(PrepareArgs),
    /// Train the hashed bag-of-words critic.
    TrainCritic(TrainArgs),
    /// Run the critic-gated loop over test questions.
    Infer(InferArgs),
    /// Score inference outcomes against gold answers.
    Eval(EvalArgs),
    /// Run the loop on generated questions with a simulated reasoner.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset as `name=path` or a bare path (name taken from the file stem).
    /// Repeatable; replaces the datasets listed in the config.
    #[arg(long = "dataset")]
    pub datasets: Vec<DatasetSpec>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReasonerArgs {
    /// remote | scripted | sim
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Model name sent to the remote backend.
    #[arg(long)]
    pub model: Option<String>,
    /// Chat-completions endpoint for the remote backend.
    #[arg(long)]
    pub url: Option<String>,
    /// JSONL fixture `{"id", "turn", "text"}` for the scripted backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// direct | gradual
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Probability of a correct answer for the sim backend.
    #[arg(long)]
    pub p: Option<f64>,
    /// Permit "none of the above" on every turn.
    #[arg(long)]
    pub allow_abstain: bool,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub reasoner: ReasonerArgs,
    /// Turn budget per question (default 4).
    #[arg(long)]
    pub max_turns: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strategy the traces were generated with; selects the feedback line.
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Reject records kept per Accept record.
    #[arg(long)]
    pub reject_per_accept: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training corpus (default `<out>/dm_train.jsonl`).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev corpus (default `<out>/dm_dev.jsonl`).
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub w_reject: Option<f64>,
    #[arg(long)]
    pub w_accept: Option<f64>,
    #[arg(long)]
    pub hash_dim: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub reasoner: ReasonerArgs,
    /// oracle | accept | reject | linear:<path> | remote:<url>
    #[arg(long)]
    pub critic: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Turn budget per question (default 5).
    #[arg(long)]
    pub max_turns: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Outcome file to score; requires exactly one dataset.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// Formula-score penalty; repeatable (default 1 and 3).
    #[arg(long = "k")]
    pub ks: Vec<f64>,
    /// Print the result as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Probability that each turn is answered correctly.
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of generated questions.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_choices: Option<usize>,
    /// oracle | accept | reject | linear:<path> | remote:<url>
    #[arg(long)]
    pub critic: Option<String>,
    #[arg(long, alias = "turns")]
    pub max_turns: Option<usize>,
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    #[arg(long = "k")]
    pub ks: Vec<f64>,
    #[arg(long)]
    pub json: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl CommonArgs {
    /// Loads the config file (or defaults) and applies these flags.
    pub fn base_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| UsageError(e.to_string()))?,
            None => RunConfig::default(),
        };
        if !self.datasets.is_empty() {
            config.datasets = self.datasets.clone();
        }
        set(&mut config.out_dir, self.out.clone());
        set(&mut config.seed, self.seed);
        set(&mut config.workers, self.workers);
        Ok(config)
    }
}

impl ReasonerArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        let r = &mut config.reasoner;
        set(&mut r.backend, self.backend);
        if self.model.is_some() {
            r.model = self.model.clone();
        }
        if self.url.is_some() {
            r.url = self.url.clone();
        }
        if self.fixture.is_some() {
            r.fixture = self.fixture.clone();
        }
        set(&mut r.p_correct, self.p);
        set(&mut config.strategy.kind, self.strategy);
        if self.allow_abstain {
            config.strategy.allow_abstain = true;
        }
    }
}

pub fn validated(config: RunConfig) -> Result<RunConfig> {
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

impl DistillArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        self.reasoner.apply(&mut c);
        set(&mut c.max_turns_generation, self.max_turns);
        validated(c)
    }
}

impl PrepareArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        set(&mut c.strategy.kind, self.strategy);
        set(&mut c.prep.reject_per_accept, self.reject_per_accept);
        set(&mut c.prep.train_fraction, self.train_fraction);
        validated(c)
    }
}

impl TrainArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        let t = &mut c.train;
        set(&mut t.lr, self.lr);
        set(&mut t.epochs, self.epochs);
        set(&mut t.w_reject, self.w_reject);
        set(&mut t.w_accept, self.w_accept);
        set(&mut t.hash_dim, self.hash_dim);
        set(&mut c.critic_threshold, self.threshold);
        validated(c)
    }
}

impl InferArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        self.reasoner.apply(&mut c);
        set(&mut c.critic, self.critic.clone());
        set(&mut c.critic_threshold, self.threshold);
        set(&mut c.max_turns_inference, self.max_turns);
        validated(c)
    }
}

impl EvalArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        if !self.ks.is_empty() {
            c.ks = self.ks.clone();
        }
        validated(c)
    }
}

impl SimulateArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.base_config()?;
        c.reasoner.backend = BackendKind::Sim;
        set(&mut c.reasoner.p_correct, self.p);
        set(&mut c.simulate.n, self.n);
        set(&mut c.simulate.n_choices, self.n_choices);
        set(&mut c.critic, self.critic.clone());
        set(&mut c.max_turns_inference, self.max_turns);
        set(&mut c.strategy.kind, self.strategy);
        if !self.ks.is_empty() {
            c.ks = self.ks.clone();
        }
        if c.simulate.n == 0 {
            return Err(UsageError("--n must be at least 1".into()).into());
        }
        validated(c)
    }
}

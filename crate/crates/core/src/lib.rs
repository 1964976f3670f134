//! Critic-gated multi-turn reasoning for multiple-choice QA.
//!
//! The pipeline has three stages:
//!
//! 1. [`distill`]: run a reasoner on training questions, re-prompting with
//!    its own rejected attempts, and label every turn against the gold answer.
//! 2. [`trainprep`] and [`critic`]: render the labeled turns into text,
//!    rebalance and split them, and train a discriminative critic with a
//!    class-weighted cross-entropy.
//! 3. [`inference`]: at test time the critic, not the gold answer, decides
//!    whether to accept a turn or ask for another attempt; exhausting the
//!    turn budget is an abstention, scored by [`metrics`].
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod config;
pub mod critic;
pub mod distill;
pub mod hashing;
mod http;
pub mod inference;
pub mod jsonl;
pub mod metrics;
pub mod pool;
pub mod qa_data;
pub mod reasoner;
pub mod scalar;
pub mod trainprep;
pub mod verdict;

pub use scalar::Scalar;
pub use verdict::Verdict;

pub type CriticScore = critic::CriticScore<f64>;
pub type LinearCritic = critic::LinearCriticModel<f64>;
pub type LinearCriticF32 = critic::LinearCriticModel<f32>;
pub type ClassWeights = critic::ClassWeights<f64>;
pub type TrainHyper = critic::TrainHyper<f64>;
pub type TrainReport = critic::TrainReport<f64>;
pub type InferenceTurn = inference::InferenceTurn<f64>;
pub type InferenceOutcome = inference::InferenceOutcome<f64>;
pub type EvalResult = metrics::EvalResult<f64>;

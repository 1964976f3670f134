//! The discriminative critic: maps rendered `{Q, C, A', r}` text to an
//! Accept probability and verdict.

mod features;
mod linear;
mod model_io;
mod remote;

use std::collections::HashMap;

use thiserror::Error;

use crate::qa_data::Dataset;
use crate::reasoner::Answer;
use crate::scalar::Scalar;
pub use crate::verdict::Verdict;

pub use features::{featurize, tokenize, SparseVector};
pub use linear::{
    logit_gradient, sigmoid, softplus, train_examples, train_linear, weighted_logistic_loss,
    weighted_nll, ClassWeights, Confusion, LinearCriticModel, TrainHyper, TrainReport,
    DEFAULT_HASH_DIM, MIN_HASH_DIM,
};
pub use model_io::{
    decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION,
};
pub use remote::{RemoteCritic, RemoteCriticConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("file format: {0}")]
    FileFormat(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file version mismatch: {0}")]
    VersionMismatch(String),
    #[error("hash_dim {0} must be a power of two >= 1024")]
    InvalidHashDim(usize),
    #[error("invalid critic configuration: {0}")]
    InvalidConfig(String),
    #[error("remote critic error (status {status:?}): {body}")]
    Remote { status: Option<u16>, body: String },
    #[error("critic needs turn metadata: {0}")]
    MissingSideband(String),
    #[error("empty critic input")]
    EmptyInput,
}

/// Accept probability plus the thresholded verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticScore<F> {
    pub p_accept: F,
    pub verdict: Verdict,
    pub threshold: F,
}

impl<F: Scalar> CriticScore<F> {
    pub fn new(p_accept: F, threshold: F) -> Self {
        let verdict = if p_accept >= threshold {
            Verdict::Accept
        } else {
            Verdict::Reject
        };
        CriticScore {
            p_accept,
            verdict,
            threshold,
        }
    }

    pub fn is_coherent(&self) -> bool {
        (self.p_accept >= self.threshold) == self.verdict.is_accept()
    }
}

/// Harness-supplied metadata about the turn being scored. Only test critics
/// look at it; production critics judge the text alone.
#[derive(Debug, Clone, Copy)]
pub struct TurnView<'a> {
    pub question_id: &'a str,
    pub turn: usize,
    pub answer: &'a Answer,
}

pub trait Critic<F: Scalar>: Send + Sync {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError>;

    fn assess_turn(
        &self,
        _turn: &TurnView<'_>,
        input_text: &str,
    ) -> Result<CriticScore<F>, CriticError> {
        self.assess(input_text)
    }
}

impl<F: Scalar, C: Critic<F> + ?Sized> Critic<F> for &C {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        (**self).assess(input_text)
    }

    fn assess_turn(
        &self,
        turn: &TurnView<'_>,
        input_text: &str,
    ) -> Result<CriticScore<F>, CriticError> {
        (**self).assess_turn(turn, input_text)
    }
}

impl<F: Scalar, C: Critic<F> + ?Sized> Critic<F> for Box<C> {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        (**self).assess(input_text)
    }

    fn assess_turn(
        &self,
        turn: &TurnView<'_>,
        input_text: &str,
    ) -> Result<CriticScore<F>, CriticError> {
        (**self).assess_turn(turn, input_text)
    }
}

fn check_input(input_text: &str) -> Result<(), CriticError> {
    if input_text.is_empty() {
        Err(CriticError::EmptyInput)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysAccept;

impl<F: Scalar> Critic<F> for AlwaysAccept {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        check_input(input_text)?;
        Ok(CriticScore::new(F::one(), F::lit(DEFAULT_THRESHOLD)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysReject;

impl<F: Scalar> Critic<F> for AlwaysReject {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        check_input(input_text)?;
        Ok(CriticScore::new(F::zero(), F::lit(DEFAULT_THRESHOLD)))
    }
}

/// Accepts exactly the correct answers, using the gold map and the turn
/// metadata. Intended for tests and simulations.
#[derive(Debug, Clone, Default)]
pub struct OracleCritic {
    gold: HashMap<String, usize>,
}

impl OracleCritic {
    pub fn new(gold: HashMap<String, usize>) -> Self {
        OracleCritic { gold }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(
            dataset
                .items
                .iter()
                .map(|i| (i.id.clone(), i.gold_index))
                .collect(),
        )
    }

    pub fn extend_from(&mut self, dataset: &Dataset) {
        self.gold
            .extend(dataset.items.iter().map(|i| (i.id.clone(), i.gold_index)));
    }
}

impl<F: Scalar> Critic<F> for OracleCritic {
    fn assess(&self, _input_text: &str) -> Result<CriticScore<F>, CriticError> {
        Err(CriticError::MissingSideband(
            "oracle critic requires question id and answer".into(),
        ))
    }

    fn assess_turn(
        &self,
        turn: &TurnView<'_>,
        input_text: &str,
    ) -> Result<CriticScore<F>, CriticError> {
        check_input(input_text)?;
        let gold = self.gold.get(turn.question_id).ok_or_else(|| {
            CriticError::MissingSideband(format!("no gold answer for {:?}", turn.question_id))
        })?;
        let p = if turn.answer.is_index(*gold) {
            F::one()
        } else {
            F::zero()
        };
        Ok(CriticScore::new(p, F::lit(DEFAULT_THRESHOLD)))
    }
}

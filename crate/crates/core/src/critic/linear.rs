//! Hashed bag-of-words logistic critic trained with class-weighted
//! cross-entropy. The loss for one example with label `y` is
//! `w_y * -ln P(y | x)`, where `P(Accept | x) = sigmoid(w . x + b)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::features::{featurize, SparseVector};
use super::{check_input, Critic, CriticError, CriticScore, DEFAULT_THRESHOLD};
use crate::scalar::Scalar;
use crate::trainprep::{read_training_file, DmExample, PrepError};
use crate::verdict::Verdict;

pub const DEFAULT_HASH_DIM: usize = 1 << 18;
pub const MIN_HASH_DIM: usize = 1 << 10;

/// Per-class loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassWeights<F> {
    pub reject: F,
    pub accept: F,
}

impl<F: Scalar> ClassWeights<F> {
    pub fn new(reject: F, accept: F) -> Result<Self, CriticError> {
        if !(reject > F::zero() && accept > F::zero()) || !reject.is_finite() || !accept.is_finite()
        {
            return Err(CriticError::InvalidConfig(format!(
                "class weights must be positive, got reject={reject} accept={accept}"
            )));
        }
        Ok(ClassWeights { reject, accept })
    }

    pub fn uniform() -> Self {
        ClassWeights {
            reject: F::one(),
            accept: F::one(),
        }
    }

    /// True-Reject examples weighted 3x, making false accepts costlier.
    pub fn strict_accept() -> Self {
        ClassWeights {
            reject: F::lit(3.0),
            accept: F::one(),
        }
    }

    pub fn for_label(&self, label: Verdict) -> F {
        match label {
            Verdict::Accept => self.accept,
            Verdict::Reject => self.reject,
        }
    }
}

impl<F: Scalar> Default for ClassWeights<F> {
    fn default() -> Self {
        Self::strict_accept()
    }
}

pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus<F: Scalar>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

/// `-w * ln(p)`: the weighted negative log-likelihood of a class probability.
pub fn weighted_nll<F: Scalar>(p_class: F, weight: F) -> F {
    -weight * p_class.ln()
}

/// Weighted cross-entropy as a function of the Accept logit.
pub fn weighted_logistic_loss<F: Scalar>(logit: F, label: Verdict, weights: &ClassWeights<F>) -> F {
    let w = weights.for_label(label);
    match label {
        // -ln sigmoid(z) = softplus(-z)
        Verdict::Accept => w * softplus(-logit),
        // -ln (1 - sigmoid(z)) = softplus(z)
        Verdict::Reject => w * softplus(logit),
    }
}

/// d loss / d logit = `w_y * (sigmoid(z) - y)`.
pub fn logit_gradient<F: Scalar>(logit: F, label: Verdict, weights: &ClassWeights<F>) -> F {
    let y = if label.is_accept() {
        F::one()
    } else {
        F::zero()
    };
    weights.for_label(label) * (sigmoid(logit) - y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCriticModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
    pub hash_dim: usize,
    pub threshold: F,
    pub class_weights: ClassWeights<F>,
}

pub(crate) fn check_hash_dim(hash_dim: usize) -> Result<(), CriticError> {
    if hash_dim.is_power_of_two() && hash_dim >= MIN_HASH_DIM {
        Ok(())
    } else {
        Err(CriticError::InvalidHashDim(hash_dim))
    }
}

pub(crate) fn check_threshold<F: Scalar>(threshold: F) -> Result<(), CriticError> {
    if threshold > F::zero() && threshold < F::one() {
        Ok(())
    } else {
        Err(CriticError::InvalidConfig(format!(
            "threshold {threshold} must lie in (0, 1)"
        )))
    }
}

impl<F: Scalar> LinearCriticModel<F> {
    pub fn zeros(
        hash_dim: usize,
        threshold: F,
        class_weights: ClassWeights<F>,
    ) -> Result<Self, CriticError> {
        check_hash_dim(hash_dim)?;
        check_threshold(threshold)?;
        ClassWeights::new(class_weights.reject, class_weights.accept)?;
        Ok(LinearCriticModel {
            weights: vec![F::zero(); hash_dim],
            bias: F::zero(),
            hash_dim,
            threshold,
            class_weights,
        })
    }

    pub fn features(&self, input_text: &str) -> SparseVector<F> {
        featurize(input_text, self.hash_dim)
    }

    pub fn logit(&self, x: &SparseVector<F>) -> F {
        x.dot(&self.weights) + self.bias
    }

    pub fn p_accept(&self, x: &SparseVector<F>) -> F {
        sigmoid(self.logit(x))
    }

    pub fn loss(&self, x: &SparseVector<F>, label: Verdict) -> F {
        weighted_logistic_loss(self.logit(x), label, &self.class_weights)
    }

    /// Sparse weight gradient and bias gradient of [`Self::loss`].
    pub fn gradient(&self, x: &SparseVector<F>, label: Verdict) -> (Vec<(usize, F)>, F) {
        let g = logit_gradient(self.logit(x), label, &self.class_weights);
        (x.iter().map(|(i, v)| (i, g * v)).collect(), g)
    }

    /// One SGD step; returns the pre-step loss.
    pub fn sgd_step(&mut self, x: &SparseVector<F>, label: Verdict, lr: F) -> F {
        let z = self.logit(x);
        let loss = weighted_logistic_loss(z, label, &self.class_weights);
        let g = logit_gradient(z, label, &self.class_weights);
        for (i, v) in x.iter() {
            self.weights[i] = self.weights[i] - lr * g * v;
        }
        self.bias = self.bias - lr * g;
        loss
    }

    pub fn score_features(&self, x: &SparseVector<F>) -> CriticScore<F> {
        CriticScore::new(self.p_accept(x), self.threshold)
    }

    /// Confusion counts at an explicit threshold (Accept is the positive class).
    pub fn confusion_at(&self, examples: &[(SparseVector<F>, Verdict)], threshold: F) -> Confusion {
        let mut c = Confusion::default();
        for (x, label) in examples {
            let accept = self.p_accept(x) >= threshold;
            match (accept, label) {
                (true, Verdict::Accept) => c.true_positive += 1,
                (true, Verdict::Reject) => c.false_positive += 1,
                (false, Verdict::Reject) => c.true_negative += 1,
                (false, Verdict::Accept) => c.false_negative += 1,
            }
        }
        c
    }
}

impl<F: Scalar> Critic<F> for LinearCriticModel<F> {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        check_input(input_text)?;
        Ok(self.score_features(&self.features(input_text)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn accuracy<F: Scalar>(&self) -> F {
        if self.total() == 0 {
            return F::zero();
        }
        F::of_usize(self.true_positive + self.true_negative) / F::of_usize(self.total())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper<F> {
    pub lr: F,
    pub epochs: usize,
    pub class_weights: ClassWeights<F>,
    pub hash_dim: usize,
    pub threshold: F,
    pub seed: u64,
}

impl<F: Scalar> Default for TrainHyper<F> {
    fn default() -> Self {
        TrainHyper {
            lr: F::lit(0.5),
            epochs: 5,
            class_weights: ClassWeights::default(),
            hash_dim: DEFAULT_HASH_DIM,
            threshold: F::lit(DEFAULT_THRESHOLD),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport<F> {
    pub epochs_run: usize,
    /// Mean weighted loss over the training set under the final model.
    pub final_train_loss: F,
    pub dev_accuracy: F,
    pub dev_false_positive_count: usize,
    pub dev_false_negative_count: usize,
    pub dev_true_positive_count: usize,
    pub dev_true_negative_count: usize,
    pub n_train: usize,
    pub n_dev: usize,
}

fn to_pairs<F: Scalar>(examples: &[DmExample], hash_dim: usize) -> Vec<(SparseVector<F>, Verdict)> {
    examples
        .iter()
        .map(|e| (featurize(&e.input_text, hash_dim), e.verdict()))
        .collect()
}

/// Seeded single-example SGD over shuffled epochs.
pub fn train_examples<F: Scalar>(
    train: &[DmExample],
    dev: &[DmExample],
    hyper: &TrainHyper<F>,
) -> Result<(LinearCriticModel<F>, TrainReport<F>), CriticError> {
    if train.is_empty() {
        return Err(CriticError::EmptyCorpus);
    }
    if hyper.epochs == 0 || hyper.lr.is_nan() || hyper.lr <= F::zero() {
        return Err(CriticError::InvalidConfig(
            "epochs and learning rate must be positive".into(),
        ));
    }
    let mut model = LinearCriticModel::zeros(hyper.hash_dim, hyper.threshold, hyper.class_weights)?;
    let train_pairs = to_pairs::<F>(train, hyper.hash_dim);
    let dev_pairs = to_pairs::<F>(dev, hyper.hash_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &train_pairs[i];
            model.sgd_step(x, *label, hyper.lr);
        }
    }

    let final_train_loss = train_pairs
        .iter()
        .map(|(x, y)| model.loss(x, *y))
        .sum::<F>()
        / F::of_usize(train_pairs.len());
    let dev_conf = model.confusion_at(&dev_pairs, model.threshold);
    let report = TrainReport {
        epochs_run: hyper.epochs,
        final_train_loss,
        dev_accuracy: dev_conf.accuracy(),
        dev_false_positive_count: dev_conf.false_positive,
        dev_false_negative_count: dev_conf.false_negative,
        dev_true_positive_count: dev_conf.true_positive,
        dev_true_negative_count: dev_conf.true_negative,
        n_train: train_pairs.len(),
        n_dev: dev_pairs.len(),
    };
    Ok((model, report))
}

/// Trains from files in the training-corpus JSONL format.
pub fn train_linear<F: Scalar>(
    train_file: impl AsRef<Path>,
    dev_file: impl AsRef<Path>,
    hyper: &TrainHyper<F>,
) -> Result<(LinearCriticModel<F>, TrainReport<F>), CriticError> {
    let read = |p: &Path| {
        read_training_file(p).map_err(|e| match e {
            PrepError::Io { path, source } => CriticError::Io { path, source },
            other => CriticError::FileFormat(other.to_string()),
        })
    };
    let train = read(train_file.as_ref())?;
    let dev = read(dev_file.as_ref())?;
    train_examples(&train, &dev, hyper)
}

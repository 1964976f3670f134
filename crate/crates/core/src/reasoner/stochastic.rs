use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Reasoner, ReasonerCall, ReasonerError};
use crate::hashing::substream_seed;

/// Simulated reasoner: answers the gold index with probability `p_correct`,
/// otherwise a uniformly drawn wrong index. Every (question, turn) pair owns
/// an independent seeded stream, so output does not depend on call order.
#[derive(Debug, Clone)]
pub struct StochasticSimReasoner {
    p_correct: f64,
    seed: u64,
}

impl StochasticSimReasoner {
    pub fn new(p_correct: f64, seed: u64) -> Result<Self, ReasonerError> {
        if !(0.0..=1.0).contains(&p_correct) {
            return Err(ReasonerError::InvalidParams(format!(
                "p_correct {p_correct} outside [0, 1]"
            )));
        }
        Ok(StochasticSimReasoner { p_correct, seed })
    }

    pub fn p_correct(&self) -> f64 {
        self.p_correct
    }
}

impl Reasoner for StochasticSimReasoner {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        if call.messages.is_empty() {
            return Err(ReasonerError::EmptyMessages);
        }
        let item = call.item;
        let mut rng =
            ChaCha8Rng::seed_from_u64(substream_seed(self.seed, &item.id, call.turn as u64));
        let n = item.n_choices();
        let correct = self.p_correct >= 1.0 || rng.random::<f64>() < self.p_correct;
        let pick = if correct {
            item.gold_index
        } else {
            // uniform over the n - 1 wrong indices
            let k = rng.random_range(0..n - 1);
            if k >= item.gold_index {
                k + 1
            } else {
                k
            }
        };
        Ok(format!(
            "Answer: {pick}\nRationale: Considering the options on attempt {}, '{}' fits the question best.",
            call.turn, item.choices[pick]
        ))
    }
}

use crate::hashing::fnv1a64;
use crate::scalar::Scalar;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F> {
    pub indices: Vec<usize>,
    pub values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    pub fn empty() -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[F]) -> F {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    /// Sum of entries.
    pub fn mass(&self) -> F {
        self.values.iter().copied().sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<F> {
        let mut out = vec![F::zero(); dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Hashed bag of words: FNV-1a 64 of each token modulo `hash_dim`, counts
/// scaled by `1/sqrt(total tokens)`.
pub fn featurize<F: Scalar>(input_text: &str, hash_dim: usize) -> SparseVector<F> {
    debug_assert!(hash_dim.is_power_of_two());
    let mut buckets: Vec<usize> = tokenize(input_text)
        .map(|t| (fnv1a64(t.as_bytes()) % hash_dim as u64) as usize)
        .collect();
    let total = buckets.len();
    if total == 0 {
        return SparseVector::empty();
    }
    buckets.sort_unstable();
    let scale = F::one() / F::of_usize(total).sqrt();
    let mut out = SparseVector::empty();
    for b in buckets {
        if out.indices.last() == Some(&b) {
            let last = out.values.last_mut().expect("parallel vectors");
            *last = *last + F::one();
        } else {
            out.indices.push(b);
            out.values.push(F::one());
        }
    }
    for v in &mut out.values {
        *v = *v * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        let t: Vec<_> = tokenize("Answer: 2, Rationale -- Water's BOILING!").collect();
        assert_eq!(t, ["answer", "2", "rationale", "water", "s", "boiling"]);
    }

    #[test]
    fn empty_is_zero() {
        let v: SparseVector<f64> = featurize("", 1024);
        assert_eq!(v.nnz(), 0);
        assert!(v.is_zero());
        let v: SparseVector<f64> = featurize(" ,;- ", 1024);
        assert_eq!(v.nnz(), 0);
    }

    #[test]
    fn deterministic_and_sorted() {
        let a: SparseVector<f32> = featurize("the quick brown fox jumps over the lazy dog", 1024);
        let b: SparseVector<f32> = featurize("the quick brown fox jumps over the lazy dog", 1024);
        assert_eq!(a, b);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }
}

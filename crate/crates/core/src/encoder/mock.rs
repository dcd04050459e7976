use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Encoder, Mode};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Context-free encoder mapping every token to a fixed vector derived from a hash of
/// its text. Overrides pin chosen tokens to explicit vectors.
#[derive(Debug, Clone, Default)]
pub struct MockEncoder {
    d: usize,
    max_positions: usize,
    overrides: HashMap<String, Vec<f64>>,
}

impl MockEncoder {
    pub fn new(d: usize) -> Self {
        Self { d, max_positions: 128, overrides: HashMap::new() }
    }

    pub fn with_vector(mut self, token: &str, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), self.d);
        self.overrides.insert(token.to_string(), v);
        self
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.overrides.get(token) {
            return v.clone();
        }
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl<T: Scalar> Encoder<T> for MockEncoder {
    fn width(&self) -> usize {
        self.d
    }

    fn max_positions(&self) -> usize {
        self.max_positions
    }

    fn encode(&self, g: &mut Graph<'_, T>, tokens: &[String], _mode: &mut Mode<'_>) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = tokens.len().min(self.max_positions);
        let rows: Vec<Vec<T>> = tokens[..n]
            .iter()
            .map(|t| self.token_vector(t).into_iter().map(T::from_f64_lossy).collect())
            .collect();
        Ok(g.constant(Tensor::from_rows(&rows)))
    }
}

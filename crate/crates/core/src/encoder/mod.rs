//! Token encoders and the sentence representation built on top of them.
//!
//! Any encoder implementing [`Encoder`] can drive the span model. The crate ships
//! a small pre-layer-norm [`TransformerEncoder`] and a parameter-free
//! [`MockEncoder`] for tests.
//!
//! The sentence vector is the mean of all token rows the encoder returns. The
//! built-in encoder has no special tokens, so every row is a real token; adapters
//! for encoders that add `[CLS]`/`[SEP]` rows must document whether they keep them.

mod mock;
mod transformer;
mod vocab;

pub use mock::MockEncoder;
pub use transformer::{EncoderConfig, TransformerEncoder, INIT_STD};
pub use vocab::{build_vocabulary, Vocabulary, PAD, PAD_ID, UNK, UNK_ID};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Training mode carries the RNG that draws dropout masks; evaluation mode draws none.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales survivors.
    pub fn dropout<T: Scalar>(&mut self, g: &mut Graph<'_, T>, x: Var, rate: f64) -> Var {
        let Mode::Train(rng) = self else { return x };
        if rate <= 0.0 {
            return x;
        }
        let (r, c) = g.value(x).shape();
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let data = (0..r * c).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect();
        g.mask(x, Tensor::from_vec(r, c, data))
    }
}

/// Contract for token encoders.
pub trait Encoder<T: Scalar>: Sync {
    /// Width `d` of every token representation.
    fn width(&self) -> usize;

    /// Longest input kept; later tokens are dropped.
    fn max_positions(&self) -> usize;

    /// Encodes `tokens` onto `g` as an `n' × d` node, `n' = min(n, max_positions)`.
    fn encode(&self, g: &mut Graph<'_, T>, tokens: &[String], mode: &mut Mode<'_>) -> Result<Var>;

    /// Evaluation-mode token matrix, outside any training graph.
    fn encode_tokens(&self, params: &ParamStore<T>, tokens: &[String]) -> Result<Tensor<T>> {
        let mut g = Graph::new(params);
        let h = self.encode(&mut g, tokens, &mut Mode::Eval)?;
        Ok(g.value(h).clone())
    }
}

/// Sentence vector as a graph node: the mean over token rows.
pub fn sentence_embedding_var<T: Scalar>(g: &mut Graph<'_, T>, h: Var) -> Var {
    g.mean_rows(h)
}

/// Sentence vector `c = (1/n) Σ h_i` of a token matrix.
pub fn sentence_embedding<T: Scalar>(h: &Tensor<T>) -> Vec<T> {
    h.mean_rows().into_vec()
}

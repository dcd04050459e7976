//! Span-based named entity recognition with sentence context and template-guided
//! contrastive learning, aimed at entities whose tokens never occur in training data.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision for common uses.

pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod inference;
pub mod loss;
pub mod model;
pub mod ooe;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod span_model;
pub mod synthetic;
pub mod templates;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type SpanNer32 = model::SpanNer<f32>;
pub type SpanNer64 = model::SpanNer<f64>;
pub type Checkpoint32 = checkpoint::Checkpoint<f32>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;

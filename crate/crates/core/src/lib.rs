//! Transformer encoder classifier with an additive target-awareness bias in
//! self-attention, plus the data, training and evaluation pipeline around it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks); the aliases below fix the common instantiations.

pub mod encoder;
pub mod error;
pub mod numcore;
pub mod scalar;
pub mod tamatrix;
pub mod textdata;
pub mod traineval;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = numcore::Tensor<f32>;
pub type Tensor64 = numcore::Tensor<f64>;
pub type Tape32 = numcore::Tape<f32>;
pub type Tape64 = numcore::Tape<f64>;
pub type ModelParams32 = encoder::ModelParams<f32>;
pub type ModelParams64 = encoder::ModelParams<f64>;

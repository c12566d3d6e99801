//! Spiking neural network training with surrogate-gradient BPTT and a
//! time-decaying temporal weight regularizer, plus the diagnostics used to
//! study how information and gradients are distributed over timesteps.
//!
//! All numerics are generic over [`Scalar`] (f32 or f64). The aliases at the
//! crate root fix the default 64-bit precision.

// `!(x > 0)` is used on purpose so NaN fails validation; index loops follow
// the formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod network;
pub mod neuron;
pub mod objectives;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use network::{Mode, Model};
pub use neuron::{Firing, LIFParams};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;

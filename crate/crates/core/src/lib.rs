//! Conditional entropy bottleneck objectives and the tooling to evaluate them.
//!
//! The crate is generic over the floating point type through [`Scalar`];
//! the aliases at the root pin the common `f64` instantiations.

pub mod data;
pub mod diffgrad;
pub mod error;
pub mod evalkit;
pub mod info;
pub mod objectives;
pub mod robustness;
pub mod scalar;
pub mod tabular;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Joint = info::DiscreteJoint<f64>;
pub type Joint32 = info::DiscreteJoint<f32>;
pub type Encoder = tabular::EncoderTable<f64>;
pub type Encoder32 = tabular::EncoderTable<f32>;

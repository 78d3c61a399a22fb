//! Reverse-mode differentiation, dense networks and Gaussian heads.

pub mod dist;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use dist::{Covariance, GaussianBatch, GaussianHead, MixtureGaussian, MixturePrior, Scale};
pub use nn::{Activation, Adam, DenseNet, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

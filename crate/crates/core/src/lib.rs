//! Permutation-equivariant attention modules and the wireless tasks they
//! are trained on.

pub mod baselines;
pub mod complex;
pub mod composer;
pub mod equivariance;
pub mod error;
pub mod matrix;
pub mod pe_modules;
pub mod permutations;
pub mod training;
pub mod wireless;

pub use error::{CoreError, Result};
pub use matrix::Matrix;

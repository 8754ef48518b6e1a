//! Embedded hyperspectral band selection.
//!
//! Spectral 1-D CNNs with attention modules are trained on labeled pixels;
//! their attention heatmaps are averaged and the bands whose scores are
//! robust-Mahalanobis outliers (exact 1-D minimum covariance determinant)
//! are reported as the informative ones.

pub mod data;
pub mod error;
pub mod eval;
pub mod net;
pub mod nn;
pub mod optim;
pub mod select;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Param, Tensor};

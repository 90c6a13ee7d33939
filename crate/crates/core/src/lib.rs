//! Data-free spectral diagnostics for neural-network weight matrices.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the analysis
//! pipeline and report types run in `f64` and are exposed through the aliases
//! below.

// `!(x > 0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod erg;
pub mod error;
pub mod free_prob;
pub mod linalg;
pub mod metrics;
pub mod plfit;
pub mod quadrature;
pub mod quality;
pub mod report;
pub mod reproduce;
pub mod rmt;
pub mod scalar;
pub mod spectral;
pub mod tensor_io;
pub mod traps;

pub use error::{Error, Result};
pub use scalar::{LinalgReal, Real};
pub use spectral::{LogHistogram, Spectrum};
pub use tensor_io::{Normalization, WeightMatrix};

pub type WeightMatrixF64 = WeightMatrix<f64>;
pub type WeightMatrixF32 = WeightMatrix<f32>;
pub type SpectrumF64 = Spectrum<f64>;
pub type SpectrumF32 = Spectrum<f32>;

//! Latent mode decomposition of multivariate signals.
//!
//! A `T × C` observation is modelled as `X = Σ_k Θ^(k) A`: `L` shared latent
//! components, each a sum of `K` narrow-band AM-FM latent modes, mixed into
//! the channels through a sparse `L × C` coefficient matrix. The solver in
//! [`vlmd`] recovers the latent modes, their shared central frequencies and
//! the coefficient matrix with an ADMM scheme whose Wiener-type updates run
//! on one-sided spectra (see [`spectral`]).
//!
//! The crate also carries a multivariate VMD baseline ([`mvmd`]), a synthetic
//! AM-FM benchmark generator ([`synth`]), scoring and benchmarking
//! ([`metrics`]) and hierarchical clustering of the outputs ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod mvmd;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod vlmd;

pub use error::{Error, Result};
pub use spectral::{FrequencyGrid, HalfSpectrum, TimeSeriesMatrix};
pub use sparse::CoefficientMatrix;
pub use vlmd::{vlmd_decompose, DecompositionResult, InitFreqs, VlmdConfig};
pub use mvmd::{mvmd_decompose, MvmdConfig, MvmdResult};

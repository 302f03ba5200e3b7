//! Exact many-body and mean-field dynamics of a lossy spin-orbit-coupled
//! bosonic Josephson junction.
//!
//! Mode order throughout is `(L up, L down, R up, R down)`.

pub mod error;
pub mod exec;
pub mod fockspace;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod qcc;
pub mod qdyn;
pub mod sparse;
pub mod spectra;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fockspace::{enumerate_basis, FockBasis, OccupationState};
pub use model::{build_coefficients, build_general_coefficients, build_many_body, CoefficientMatrices, ManyBodyMatrix, ModelParams};
pub use num_complex::Complex64;
pub use spectra::{eigendecompose, SpectrumResult, ThresholdResult};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock basis dimension {dim} exceeds the configured maximum {max}")]
    Capacity { dim: u128, max: usize },

    #[error("occupation state {state:?} is not in the basis (N = {n_particles}, M = {n_modes})")]
    StateNotFound {
        state: Vec<u32>,
        n_particles: u32,
        n_modes: usize,
    },

    #[error("the explicit model is defined for 4 modes, got {0}")]
    UnsupportedModes(usize),

    #[error("coefficient matrices violate {identity} (max deviation {deviation:.3e})")]
    PropertyViolation {
        identity: &'static str,
        deviation: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed for matrix {fingerprint:016x}: {reason}")]
    Eigen { fingerprint: u64, reason: String },

    #[error(
        "eigenvector matrix is near-defective (condition {condition:.3e}); use the adaptive Runge-Kutta propagator"
    )]
    Defective { condition: f64 },

    #[error("left/right eigenvector pairing residual {residual:.3e} exceeds {limit:.1e}")]
    Biorthogonality { residual: f64, limit: f64 },

    #[error("no PT-symmetry breaking up to beta_max = {beta_max} (beta_c > beta_max)")]
    Bracket { beta_max: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("state has vanishing norm")]
    DegenerateNorm,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

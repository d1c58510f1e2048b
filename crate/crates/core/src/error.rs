use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for {modes} mode(s)")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("polynomial degree {degree} on mode {mode} exceeds guard band {guard}")]
    DegreeExceedsGuard { mode: usize, degree: u32, guard: usize },

    #[error("non-finite coefficient in polynomial")]
    NonFiniteCoefficient,

    #[error("polynomial contains p-quadrature symbols; only x-only polynomials are allowed here")]
    ContainsMomentum,

    #[error("state is not normalized: <psi|psi> = {0}")]
    NotNormalized(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform is not symplectic (residual {0:e})")]
    NotSymplectic(f64),

    #[error("kappa mismatch: {0} vs {1}")]
    KappaMismatch(f64, f64),

    #[error("objective is not finite at the requested point")]
    NonFiniteObjective,

    #[error("no local search converged out of {0} start(s)")]
    NoConvergence(usize),

    #[error("grid domain too small: {0}")]
    DomainTooSmall(String),

    #[error("conditioning on a zero-probability outcome")]
    ZeroProbability,

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GleError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Evaluation was requested outside a tabulated range.
    #[error("range error: {0}")]
    Range(String),
    /// A constructor invariant does not hold.
    #[error("invalid input: {0}")]
    Invariant(String),
    /// Matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A linear solve failed during time stepping.
    #[error("singular step matrix at step {step}")]
    SingularStep { step: usize },
    /// No stationary solution exists for the requested covariance.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The spectral factorization produced an inconsistent result.
    #[error("construction failure: {0}")]
    Construction(String),
    /// The inverse transform was not real to tolerance.
    #[error("conjugate symmetry violated: imaginary residue {residue:e} exceeds {limit:e}")]
    ConjugateSymmetry { residue: f64, limit: f64 },
    /// Time grids of two objects do not match.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// Configuration of a sampler or integrator is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The resolvent horizon is too short for the requested quadrature.
    #[error("horizon error: {0}")]
    Horizon(String),
    /// A statistical estimator could not be formed.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// The integrability heuristic for the resolvent failed.
    #[error("Paley-Wiener check failed: {0}")]
    PaleyWiener(String),
    /// A design target is not a valid autocorrelation.
    #[error("target error: {0}")]
    Target(String),
    /// A design target is too rough for a square-integrable force density.
    #[error("smoothness error: {0}")]
    Smoothness(String),
}

pub type Result<T> = std::result::Result<T, GleError>;

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HnaError {
    #[error("special function domain error: {0}")]
    Domain(String),

    #[error("recurrence overflow evaluating J_{order}({x})")]
    RecurrenceOverflow { order: u32, x: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid geometry at vertex {vertex}: {reason}")]
    Geometry { vertex: usize, reason: String },

    #[error("kernel evaluated at coincident points")]
    SingularEvaluation,

    #[error("quadrature failure between {test} and {trial}: non-finite value")]
    Quadrature { test: String, trial: String },

    #[error("evaluation point is within {distance:e} of the boundary")]
    NearBoundary { distance: f64 },

    #[error("formulation error: {0}")]
    Formulation(String),

    #[error("singular system (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("ill-conditioned Gram system (condition estimate {condition:e}); {advice}")]
    IllConditioned { condition: f64, advice: String },

    #[error("problem too large for a dense solve: {required} unknowns required (limit {limit})")]
    TooLarge { required: usize, limit: usize },

    #[error("near a Dirichlet eigenvalue: |J_{order}(ka)| = {value:e}")]
    NearEigenvalue { order: i64, value: f64 },

    #[error("grazing Rayleigh mode n = {0} (beta_n = 0)")]
    GrazingMode(i64),

    #[error("density has the wrong semantic tag: expected {expected}")]
    WrongTag { expected: &'static str },

    #[error("reference norm is zero")]
    ZeroNorm,

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, HnaError>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("classical space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("conditional state undefined at index {index}: Tr = {weight:e} is below threshold")]
    ZeroProbabilityCondition { index: usize, weight: f64 },

    #[error("observable is not Hermitian (defect {defect:e})")]
    NonHermitianObservable { defect: f64 },

    #[error("expectation value has imaginary residue {imag:e}")]
    ComplexExpectation { imag: f64 },

    #[error("measurement family is incomplete (defect {defect:e})")]
    IncompleteFamily { defect: f64 },

    #[error("projectors {i} and {j} are not orthogonal (defect {defect:e})")]
    NonOrthogonal { i: usize, j: usize, defect: f64 },

    #[error("operator {index} is not a Hermitian idempotent (defect {defect:e})")]
    NotAProjector { index: usize, defect: f64 },

    #[error("grid [{lo}, {hi}] does not cover the required range [{need_lo}, {need_hi}]")]
    GridTooNarrow { lo: f64, hi: f64, need_lo: f64, need_hi: f64 },

    #[error("jump kernel under-resolved: width {width:e} < dx {dx:e}")]
    KernelUnderresolved { width: f64, dx: f64 },

    #[error("operation requires a grid space, got a discrete space")]
    DiscreteSpace,

    #[error("negative transition rate T({x},{y}) = {rate:e}")]
    NegativeRate { x: usize, y: usize, rate: f64 },

    #[error("operator is not Hermitian (defect {defect:e})")]
    NonHermitian { defect: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("observer `{name}` failed at t = {time}: {message}")]
    ObserverFailure { name: String, time: f64, message: String },

    #[error("probability mass {mass:e} near the grid boundary exceeds the leak threshold")]
    BoundaryLeak { mass: f64 },

    #[error("oscillator truncation tail mass {mass:e} exceeds the guard")]
    TailMass { mass: f64 },

    #[error("ensemble too small: need at least {needed} records, got {found}")]
    EmptyEnsemble { needed: usize, found: usize },

    #[error("measurement normalization underflowed after {attempts} draws at step {step}")]
    NormUnderflow { step: usize, attempts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::InvalidParameter(_) => 2,
            Error::SpaceMismatch(_) | Error::DimensionMismatch { .. } => 2,
            _ => 1,
        }
    }
}

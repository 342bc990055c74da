use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("value out of range: {0}")]
    RangeError(String),
    #[error("density floor must be positive, got {0}")]
    FloorError(f64),
    #[error("density value {value} at node {node} is below the floor {floor}")]
    FloorViolation { node: usize, value: f64, floor: f64 },
    #[error("exponent error: {0}")]
    ExponentError(String),
    #[error("degenerate perturbation size eps = {0}")]
    DegenerateEps(f64),
    #[error("total masses differ: {source_mass} vs {target_mass}")]
    MassError { source_mass: f64, target_mass: f64 },
    #[error("support of size {size} exceeds the cap of {cap} atoms")]
    SizeCap { size: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (marginal violation {violation:e})")]
    NoConvergence { iterations: usize, violation: f64 },
    #[error("source point {0} carries no mass in the plan")]
    UnmappedPoint(usize),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("weighted mean {mean:e} of the perturbation is not zero")]
    MeanError { mean: f64 },
    #[error("operation requires a {expected} path")]
    KindError { expected: &'static str },
    #[error("incomplete input: {0}")]
    IncompleteInput(String),
    #[error("incompatible data: compatibility residual {residual:e} exceeds tolerance {tolerance:e}")]
    IncompatibleData { residual: f64, tolerance: f64 },
    #[error("function is not convex: clamp rate {clamp_rate}")]
    ConvexityError { clamp_rate: f64 },
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("particle cloud must contain at least one point")]
    EmptyCloud,
    #[error("non-finite coordinate at particle {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("problem size {size} exceeds cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },
    #[error("interpolation time {0} outside [0, 1]")]
    TOutOfRange(f64),
    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("Sinkhorn stopped after {iterations} iterations with marginal error {marginal_error:e}")]
    SinkhornNotConverged { iterations: usize, marginal_error: f64 },
    #[error("non-finite dual potential")]
    NonFiniteDual,
    #[error("unsupported functional: {0}")]
    UnsupportedFunctional(String),
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("lambda {lambda} must exceed the semiconvexity constant {rho}")]
    LambdaTooSmall { lambda: f64, rho: f64 },
    #[error("accelerated prox produced a non-finite iterate")]
    NonFiniteIterate,
    #[error("required sample count {required} exceeds cap {cap}")]
    KCapExceeded { required: u64, cap: u64 },

    #[error(
        "regularization too weak: conjugate slope {slope} at l exceeds {max_slope}{}",
        max_delta.map(|d| format!(" (largest admissible delta {d})")).unwrap_or_default()
    )]
    RegularizationTooWeak {
        slope: f64,
        max_slope: f64,
        max_delta: Option<f64>,
    },
    #[error("empty dual interval [{l}, {u}]")]
    IntervalEmpty { l: f64, u: f64 },
    #[error("trust radius {delta} exceeds admissible bound {bound}")]
    DeltaTooLarge { delta: f64, bound: f64 },
    #[error("primal coupling infeasible: transport cost {cost} exceeds budget {budget}")]
    InfeasiblePrimal { cost: f64, budget: f64 },
    #[error("objective has zero gradient on the cloud")]
    DegenerateObjective,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trust-region step failed after {retries} halvings of delta (last {delta})")]
    StepRejected { retries: usize, delta: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed number {value:?} on line {line}")]
    Parse { line: usize, value: String },
}

use thiserror::Error;

/// Errors produced by the chain analysis and certification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transition matrix is not square or does not match the {labels} labels")]
    NotSquare { labels: usize },
    #[error("negative transition probability {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, outside tolerance of 1")]
    RowSumOutOfTolerance { row: usize, sum: f64 },
    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),
    #[error("state space must contain at least one state")]
    EmptySpace,
    #[error("unknown state label {0:?}")]
    UnknownLabel(String),
    #[error("state index {index} out of range for {size} states")]
    StateOutOfRange { index: usize, size: usize },
    #[error("distributions or kernels live on different state spaces")]
    SpaceMismatch,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("small set must be nonempty")]
    EmptySmallSet,

    #[error("kernel is not irreducible")]
    NotIrreducible,
    #[error("linear solve is singular")]
    SolverSingular,
    #[error("eigenvalue iteration did not converge")]
    NonConvergence,

    #[error("horizon {got} is below the minimum {min}")]
    HorizonTooSmall { got: usize, min: usize },
    #[error("total variation does not decay geometrically (estimated rate {rate})")]
    NoGeometricDecay { rate: f64 },
    #[error("override rate {0} is not in (0, 1)")]
    InvalidOverride(f64),

    #[error("u = {u} outside the valid range (1, {u_max})")]
    UOutOfRange { u: f64, u_max: f64 },
    #[error("grid size {0} is below the minimum 8")]
    GridTooSmall(usize),
    #[error("empty search range for u (u_max = {0})")]
    EmptyRange(f64),

    #[error("argument out of domain: {0}")]
    DomainError(String),

    #[error("path length {got} does not match the functional horizon {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{size} tuples exceed the enumeration limit {limit}")]
    TooLargeToEnumerate { size: f64, limit: f64 },
    #[error("invalid functional: {0}")]
    InvalidFunctional(String),
    #[error("difference vector does not bound the functional (coordinate {coordinate}, excess {excess})")]
    NotBoundedDifference { coordinate: usize, excess: f64 },

    #[error("{paths} paths exceed the enumeration budget {budget}")]
    BudgetExceeded { paths: f64, budget: f64 },
    #[error("law horizon {law} does not match functional horizon {functional}")]
    HorizonMismatch { law: usize, functional: usize },
    #[error("index {index} out of range for horizon {horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },
    #[error("prefix has length {got}, expected {expected}")]
    PrefixLength { expected: usize, got: usize },

    #[error("start state {0} is not in the small set")]
    StartNotInC(usize),

    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown zoo entry {0:?}")]
    UnknownZooEntry(String),
}

pub type Result<T> = std::result::Result<T, Error>;

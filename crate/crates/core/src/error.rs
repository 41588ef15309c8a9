use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} at position {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("duplicate sample id {0}")]
    DuplicateId(u64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class {0} has zero support")]
    EmptyClass(usize),

    #[error("beta must lie in [0, 1), got {0}")]
    BetaOutOfRange(f64),

    #[error("inverse-frequency exponent must be positive, got {0}")]
    NonPositiveExponent(f64),

    #[error("{what} {index} has norm below 1e-12")]
    ZeroNormVector { what: &'static str, index: usize },

    #[error("prototype for class {0} is undefined (no supporting samples)")]
    UndefinedPrototype(usize),

    #[error("marginals are infeasible: {0}")]
    InfeasibleMarginals(String),

    #[error("cost matrix has a non-finite entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("instance with {cells} cells exceeds the exact solver cap of {cap}")]
    InstanceTooLarge { cells: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {0} of the transport plan has no mass")]
    UndefinedRow(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("cannot train on an empty subset")]
    EmptySubset,

    #[error("feature dimension {dim} is smaller than the class count {classes}")]
    DimensionTooSmall { dim: usize, classes: usize },

    #[error("noise ratio must lie in [0, 1], got {0}")]
    EtaOutOfRange(f64),

    #[error("every class count is zero")]
    AllEmpty,

    #[error("ground-truth labels are required")]
    MissingTruth,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised while building or applying the discrete operators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("refinement depth {levels} needs {required} interior edge dofs, more than the index type holds")]
    TooManyDofs { levels: usize, required: u128 },

    #[error("level {level} is out of range (finest level is {finest})")]
    LevelOutOfRange { level: usize, finest: usize },

    #[error("operation needs a fine level >= 1, got {0}")]
    CoarsestLevel(usize),

    #[error("brick extents must be positive, got {0:?}")]
    NonPositiveExtent([f64; 3]),

    #[error("point {point:?} lies outside the brick with extents {extents:?}")]
    PointOutsideBrick { point: [f64; 3], extents: [f64; 3] },

    #[error("curl coefficient must be positive, got {0}")]
    NonPositiveCoefficient(f64),

    #[error("quadrature order must be at least 2, got {0}")]
    QuadratureOrder(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{context}: matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite {
        context: String,
        pivot: usize,
        value: f64,
    },

    #[error("damping factor {eta} exceeds the {kind} smoother bound {bound}; pass unsafe_damping to override")]
    DampingOutOfBounds {
        kind: &'static str,
        eta: f64,
        bound: f64,
    },

    #[error("invalid coarse entity: {0}")]
    InvalidEntity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no convergence after {iterations} iterations (last ratio {ratio:e})")]
    NotConverged { iterations: usize, ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed tree document: {0}")]
    Malformed(String),

    #[error("point ids must be dense 0..{expected}; found id {found}")]
    NonDenseIds { expected: usize, found: usize },

    #[error("point {id} references missing parent {parent}")]
    DanglingParent { id: usize, parent: usize },

    #[error("parent links form a cycle through points {0:?}")]
    Cycle(Vec<usize>),

    #[error("tree must have exactly one root; found {0}")]
    RootCount(usize),

    #[error("point {id} has parent {parent}; parent ids must precede child ids")]
    NotTopological { id: usize, parent: usize },

    #[error("point {id} has {children} children; only bifurcations are supported")]
    TooManyChildren { id: usize, children: usize },

    #[error("ostium must have exactly one child; found {0}")]
    OstiumDegree(usize),

    #[error("point {id}: {reason}")]
    OutletFlag { id: usize, reason: &'static str },

    #[error("point {id}: {field} must be positive, got {value}")]
    NonPositive { id: usize, field: &'static str, value: f64 },

    #[error("unsupported document: {0}")]
    Unsupported(String),

    #[error("profile has {profile} entries but tree has {tree} points")]
    ProfileMismatch { profile: usize, tree: usize },

    #[error("lower bound at point {id} ({bound}) cannot be satisfied by any admissible value")]
    InfeasibleBounds { id: usize, bound: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("boundary conditions do not match tree: {0}")]
    BoundaryMismatch(String),

    #[error("trees are not topologically identical: {0}")]
    TopologyMismatch(String),

    #[error("{label}: solver did not converge after {iterations} iterations")]
    NotConverged { label: String, iterations: usize },

    #[error("point {id}: losses exceed the available pressure (no solution with positive pressure)")]
    NegativePressure { id: usize },

    #[error("edge {edge}: anchor flow must be positive, got {flow}")]
    NonPositiveFlow { edge: usize, flow: f64 },

    #[error("point {id}: radius {radius} outside exploration envelope [{lower}, {upper}]")]
    OutsideEnvelope { id: usize, radius: f64, lower: f64, upper: f64 },

    #[error("path {0} does not exist")]
    UnknownPath(usize),

    #[error("overlapping plan intervals on point {id} request fractions {first} and {second}")]
    ConflictingIntervals { id: usize, first: f64, second: f64 },

    #[error("plan interval {index}: {reason}")]
    InvalidInterval { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

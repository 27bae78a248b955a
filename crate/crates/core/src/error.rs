use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("room `{room}` references unknown wall `{wall}`")]
    DanglingReference { room: String, wall: String },

    #[error("wall `{wall}` has a non-unit normal (norm {norm:.6})")]
    NonUnitNormal { wall: String, norm: f64 },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("plan contains no storeys")]
    EmptyPlan,

    #[error("prior graph contains no rooms")]
    EmptyPrior,

    #[error("plane too close to the origin for closest-point form (|d| = {0:e})")]
    DegeneratePlane(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("waypoints {0} and {1} coincide")]
    CoincidentWaypoints(usize, usize),

    #[error("no estimated pose could be matched to a ground-truth timestamp")]
    NoMatchedPoses,

    #[error("no observed wall could be associated to the plan ({unassociated} unassociated)")]
    NoAssociatedWalls { unassociated: usize },

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed record at line {line}: {message}")]
    Record { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node index {index} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },

    #[error("duplicate link ({0}, {1})")]
    DuplicateLink(usize, usize),

    #[error("link ({0}, {1}) does not exist")]
    MissingLink(usize, usize),

    #[error("connectivity undefined for a graph with {0} node(s)")]
    ConnectivityUndefined(usize),

    #[error("node {0} has no self-loop; every agent must include itself in its neighbourhood")]
    MissingSelfLoop(usize),

    #[error("node {0} is isolated")]
    IsolatedNode(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix dimension {requested} exceeds configured maximum {max}")]
    DimensionCap { requested: usize, max: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not row-stochastic: row {row} sums to {sum}")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("non-self-damped system; cyclic-graph precondition violated (zero diagonal at state {0})")]
    NotSelfDamped(usize),

    #[error("state index {index} out of range for state dimension {dim}")]
    StateOutOfRange { index: usize, dim: usize },

    #[error("observer gain is not block-diagonal: {0}")]
    NotBlockDiagonal(String),

    #[error("eigenvalue computation failed")]
    EigenFailure,

    #[error("divergence: non-finite estimate at step {0}")]
    Divergence(usize),

    #[error("observability lost; redundancy level exceeded ({0})")]
    ObservabilityLost(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

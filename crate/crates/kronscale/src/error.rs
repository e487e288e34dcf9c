use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("field mismatch: {0} vs {1}")]
    FieldMismatch(String, String),
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("field too small: {0}")]
    FieldTooSmall(String),
    #[error("operation needs characteristic 2, got field {0}")]
    Characteristic(String),
    #[error("unassigned input {0}")]
    UnassignedInput(String),
    #[error("formal degree {found} exceeds bound {bound}")]
    DegreeBound { found: usize, bound: usize },
    #[error("circuit must have exactly one output, has {0}")]
    SingleOutputRequired(usize),
    #[error("circuit is not {0}-skew with respect to the extraction variables")]
    NotSkew(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("ground sets overlap")]
    GroundOverlap,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{found} distinct vector classes exceed the cap of {cap}")]
    TooManyClasses { found: usize, cap: usize },
    #[error("group sizes sum to {found}, expected {expected}")]
    PartitionSize { found: usize, expected: usize },
    #[error("{0} is not divisible by 3")]
    Divisibility(usize),
    #[error("odd order {0}")]
    Parity(usize),
    #[error("graph is not bipartite with the declared sides")]
    Bipartiteness,
    #[error("decomposition provider: {0}")]
    Provider(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

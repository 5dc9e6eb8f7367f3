use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("edges shared by more than two faces: {0:?}")]
    NonManifold(Vec<(usize, usize)>),

    #[error("inconsistently oriented edges: {0:?}")]
    Orientation(Vec<(usize, usize)>),

    #[error("degenerate face {face}: {reason}")]
    DegenerateFace { face: usize, reason: String },

    #[error("vertex {0} is not referenced by any face")]
    IsolatedVertex(usize),

    #[error("eigensolver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("patch weights vanish at vertex {vertex}, orientation {orientation}, scale {scale}")]
    EmptyPatch {
        vertex: usize,
        orientation: usize,
        scale: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("underdetermined functional map: {selected} confident points for k = {k}")]
    Underdetermined { selected: usize, k: usize },

    #[error("rank-deficient least-squares system (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

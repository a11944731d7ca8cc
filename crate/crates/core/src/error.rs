use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integration diverged at step {step} (particle {particle})")]
    Diverged { step: usize, particle: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample counts differ: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("empty measure")]
    Empty,

    #[error("problem size {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("aggregate curvature matrix is singular")]
    Singular,

    #[error("time grids differ")]
    GridMismatch,

    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),

    #[error("non-nested step counts: {0:?}")]
    NonNested(Vec<usize>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            domain,
        }
    }
}

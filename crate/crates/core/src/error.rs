use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("combiner matrix W does not have full column rank")]
    SingularCombiner,

    #[error("training matrix has zero average power")]
    ZeroPilotPower,

    #[error("cannot build {n_s} orthogonal pilots with only {n_t} transmit antennas")]
    TooManyPilots { n_t: usize, n_s: usize },

    #[error("noise variance is zero; the Fisher information is unbounded")]
    ZeroNoise,

    #[error("channel is identically zero")]
    ZeroChannel,

    #[error("dense projection of size {0}x{0} exceeds the materialization limit")]
    DenseTooLarge(usize),

    #[error("atom is annihilated by the observation matrices")]
    ZeroAtom,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

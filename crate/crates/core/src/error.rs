use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The integrated state became non-finite even after rescaling.
    #[error("non-finite state while integrating at lambda = {lambda}")]
    Overflow { lambda: f64 },

    #[error("eigenvalue search for m = {m} failed in [{lo}, {hi}]: {detail}")]
    SearchFailure {
        m: usize,
        lo: f64,
        hi: f64,
        detail: String,
    },

    #[error(
        "direct ({direct}) and characterization ({characterization}) routes disagree at t = {t}, r = {r}"
    )]
    Inconsistent {
        t: f64,
        r: f64,
        direct: f64,
        characterization: f64,
    },

    #[error("singular implicit-derivative denominator {denominator:e} at t = {t}, r = {r}")]
    SingularDerivative { t: f64, r: f64, denominator: f64 },

    #[error("coupling range: {0}")]
    Range(String),

    #[error("surface has no r = 0 row")]
    MissingBaseline,

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("reconstruction failed: {0}")]
    ReconstructionFailure(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

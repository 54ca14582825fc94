use thiserror::Error;
use voight_core::imageio::ImageError;
use voight_core::metrics::MetricsError;
use voight_core::solver::SolverError;
use voight_core::stability::StabilityError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

use thiserror::Error;

use crate::iv::Diagnostics;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A node label or lag outside the valid range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unstable model: spectral radius {spectral_radius:.6} is not below 1")]
    Unstable { spectral_radius: f64 },

    #[error("weak instrument: {0}")]
    WeakInstrument(Diagnostics),

    #[error("rank-deficient C_AI: {0}")]
    RankDeficient(Diagnostics),

    #[error("sampler gave up after {attempts} rejected draws for {experiment}")]
    SamplerFailure { experiment: String, attempts: usize },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

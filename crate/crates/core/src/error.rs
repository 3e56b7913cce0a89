use thiserror::Error;

/// Errors raised by the model, sampler, fitter and benchmark drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("basis Gram matrix is rank deficient even after ridge ({0}); use a smaller basis dimension r")]
    RankDeficientBasis(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("observation {index}: {source}")]
    Observation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_observation(self, index: usize) -> Self {
        Error::Observation {
            index,
            source: Box::new(self),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge after {iterations} operator applications; scaled residuals {residuals:?}")]
    EigenNotConverged { iterations: usize, residuals: Vec<f64> },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{phase} failed on mesh {level}: {source}")]
    Phase {
        phase: &'static str,
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { path: path.into(), reason: reason.into() }
    }

    pub(crate) fn in_phase(self, phase: &'static str, level: usize) -> Self {
        Error::Phase { phase, level, source: Box::new(self) }
    }
}

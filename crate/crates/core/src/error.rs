use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate border: {0}")]
    DegenerateBorder(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "Cholesky factorization of {what} failed (dim {dim}, mean diagonal {mean_diag:.3e}, \
         min diagonal {min_diag:.3e}, largest jitter tried {max_jitter:.3e})"
    )]
    NotPositiveDefinite { what: String, dim: usize, mean_diag: f64, min_diag: f64, max_jitter: f64 },

    #[error("buffer grid is empty (spacing {spacing}, buffer {buffer}); try a smaller grid spacing")]
    EmptyGrid { spacing: f64, buffer: f64 },

    #[error("no units within distance {0} of the border")]
    NoUnitsNearBorder(f64),

    #[error("border weights sum to zero; the weighted mean is undefined")]
    ZeroWeightSum,

    #[error("hyperparameter optimization failed: {0}")]
    Optimizer(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("data error at {location}: {message}")]
    Data { location: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

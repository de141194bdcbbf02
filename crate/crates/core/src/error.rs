use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate geometry: no valid neighbour at replacement step {step}")]
    DegenerateGeometry { step: usize },

    #[error("series is not chaotic (lambda = {lambda})")]
    NotChaotic { lambda: f64 },

    #[error("E1 did not saturate within m_max = {m_max}; retry with a larger m_max")]
    NoSaturation { m_max: usize },

    #[error("non-finite update in parameter block `{block}`")]
    NonFiniteUpdate { block: String },

    #[error("state diverged at Euler-Maruyama step {step}")]
    Divergence { step: usize },

    #[error("prediction unstable: {discarded} of {total} paths diverged")]
    PredictionUnstable { discarded: usize, total: usize },

    #[error("insufficient Monte-Carlo paths: {paths} (need at least {required})")]
    StatisticalPower { paths: usize, required: usize },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("timestamps not strictly increasing at row {row}")]
    Ordering { row: usize },

    #[error("training split is constant; cannot normalise")]
    ConstantSeries,

    #[error("least-squares system is rank deficient")]
    Rank,

    #[error("training failed after {retries} learning-rate halvings: {cause}")]
    TrainingFailed { retries: usize, cause: Box<Error> },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Wraps an error with the name of the experiment stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

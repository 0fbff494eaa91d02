use thiserror::Error;

/// Everything that can go wrong when building parameters, evaluating
/// likelihoods, or running an estimator / verification sweep.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mixture must have at least one component")]
    EmptyMixture,
    #[error("component {index}: weight must be finite and in [0, 1], got {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("mixture weights must sum to 1 within 1e-12, got {0}")]
    WeightSum(f64),
    #[error("component {index}: location must be finite, got {value}")]
    InvalidLocation { index: usize, value: f64 },
    #[error("component {index}: scale must be finite and positive, got {value}")]
    InvalidScale { index: usize, value: f64 },
    #[error("scale must be finite and positive, got {0}")]
    NonpositiveScale(f64),
    #[error("dataset must be non-empty")]
    EmptyData,
    #[error("dataset value at row {row} is not finite: {value}")]
    NonfiniteData { row: usize, value: f64 },
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("component counts differ: {0} vs {1}")]
    ComponentMismatch(usize, usize),
    #[error("{field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("grid spans {points} points, above the 1e8 limit")]
    GridTooLarge { points: u128 },
    #[error("no grid point satisfies the scale-ratio floor")]
    GridInfeasible,
    #[error("every start aborted: {0}")]
    AllStartsAborted(String),
    #[error("row {row}: every component density vanished; responsibilities undefined")]
    VanishingDensity { row: usize },
    #[error("draw band is empty: log scale ceiling {log_ceiling} is below the representable floor {log_floor}")]
    EmptyDrawBand { log_floor: f64, log_ceiling: f64 },
}

impl Error {
    /// Shorthand for configuration errors that name the offending field.
    pub fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid output partition: {0}")]
    InvalidPartition(String),
    #[error("state completion is singular: {0}")]
    SingularCompletion(String),
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),
    #[error("attack bound violated at t={t:.4}: {signal} = {value:.4} exceeds {bound:.4}")]
    AttackBound {
        t: f64,
        signal: String,
        value: f64,
        bound: f64,
    },
    #[error("signal {0} has no analytic derivatives")]
    NoDerivatives(String),
    #[error("sampled signal queried outside its table at t={0}")]
    OutsideTable(f64),
    #[error("threshold undefined: {0}")]
    Threshold(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv error: {0}")]
    CsvContent(String),
}

impl Error {
    /// Short machine-greppable code for CLI reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "E_NONFINITE",
            Error::InvalidParameter(_) => "E_PARAM",
            Error::InvalidPartition(_) => "E_PARTITION",
            Error::SingularCompletion(_) => "E_COMPLETION",
            Error::EstimatorUndefined(_) => "E_ESTIMATOR",
            Error::AttackBound { .. } => "E_ATTACK_BOUND",
            Error::NoDerivatives(_) => "E_NO_DERIVATIVES",
            Error::OutsideTable(_) => "E_TABLE_RANGE",
            Error::Threshold(_) => "E_THRESHOLD",
            Error::Config(_) => "E_CONFIG",
            Error::Io(_) => "E_IO",
            Error::Csv(_) | Error::CsvContent(_) => "E_CSV",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

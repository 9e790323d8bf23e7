use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported sampling: {0}")]
    UnsupportedSampling(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// `user` is the zero-based index; messages use one-based labels.
    #[error("zero forcing infeasible: no degrees of freedom left for user {} after pre-beamforming", .user + 1)]
    ZfInfeasible { user: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedSampling(_) => "unsupported-sampling",
            Error::DegenerateChannel(_) => "degenerate-channel",
            Error::ZfInfeasible { .. } => "zf-infeasible",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

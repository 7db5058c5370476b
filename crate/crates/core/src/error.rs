use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid population spec: {0}")]
    InvalidSpec(String),

    #[error("invalid noise calibration: {0}")]
    InvalidCalibration(String),

    /// The requested environment is not covered by the calibration anchors.
    #[error("refusing to extrapolate calibration to {env}: {reason}")]
    ExtrapolationRefused { env: String, reason: String },

    #[error("every signature position was eliminated")]
    EmptySignature,
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

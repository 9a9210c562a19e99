use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("path too short: {path_length} m does not fit one stride of {stride_length} m")]
    PathTooShort { path_length: f64, stride_length: f64 },

    #[error("range exceeds sampling limit: {range:.3} m > {max_range:.3} m")]
    RangeExceedsSamplingLimit { range: f64, max_range: f64 },

    #[error("tracks sampled at {tracks:.3} Hz but chirp rate is {chirp_rate:.3} Hz")]
    ChirpRateMismatch { tracks: f64, chirp_rate: f64 },

    #[error("non-finite sample at chirp {chirp}, sample {sample}")]
    NonFiniteSample { chirp: usize, sample: usize },

    #[error("record too short: {frames} frames, need more than {required}")]
    RecordTooShort { frames: usize, required: usize },

    #[error("Doppler axis is not symmetric about 0 Hz")]
    AsymmetricDopplerAxis,

    #[error("misaligned matrices: {0}")]
    Misaligned(String),

    #[error("configuration requires {required} nodes ({configuration} got {found})")]
    MissingNodes {
        configuration: String,
        required: usize,
        found: usize,
    },

    #[error("configuration {configuration} requires a {role} node")]
    MissingNodeRole {
        configuration: String,
        role: String,
    },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

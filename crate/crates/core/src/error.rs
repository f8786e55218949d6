use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no frames")]
    NoFrames,

    #[error("invalid video geometry: {0}")]
    InvalidVideo(String),

    #[error("fractional frame rate {0} is not supported")]
    FractionalFps(f64),

    #[error("dimension or frame-count mismatch: {0}")]
    Mismatch(String),

    #[error("not a VMAF log")]
    NotVmafLog,

    #[error("unknown codec `{0}`")]
    UnknownCodec(String),

    #[error("GOP `{gop}` is not defined for {codec}")]
    UnknownGop { codec: String, gop: String },

    #[error("QP {qp} outside the {codec} range [{min}, {max}]")]
    QpOutOfRange { codec: String, qp: i32, min: i32, max: i32 },

    #[error("segment {index} is out of range ({count} segments)")]
    SegmentOutOfRange { index: usize, count: usize },

    #[error("no encoder command template registered for {0}")]
    MissingTemplate(String),

    #[error("encoder exited with {status}: {diagnostics}")]
    EncoderFailed { status: String, diagnostics: String },

    #[error("log undefined: sample value {0} is not positive")]
    LogUndefined(f64),

    #[error("rank-deficient design: {distinct} distinct QP values for order {order}")]
    RankDeficient { distinct: usize, order: usize },

    #[error("degenerate data: response has zero variance")]
    DegenerateData,

    #[error("target unreachable inside QP range, nearest boundary QP {boundary}")]
    TargetUnreachable { boundary: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no quality overlap between RD curves")]
    NoQualityOverlap,

    #[error("RD curve needs at least 4 points, got {0}")]
    TooFewPoints(usize),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("unmapped activity label `{0}`")]
    UnmappedLabel(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate for joint {joint}")]
    NonFinite { joint: &'static str },

    #[error("unknown action label {0:?}")]
    UnknownAction(String),

    #[error("unknown joint {0:?}")]
    UnknownJoint(String),

    #[error("window exceeds image: window {window_w}x{window_h}, image {image_w}x{image_h}")]
    WindowExceedsImage {
        window_w: usize,
        window_h: usize,
        image_w: usize,
        image_h: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-background source: {0}")]
    NonBackgroundSource(String),

    #[error("degenerate reference length")]
    DegenerateReference,

    #[error("too few features: {got} (need at least {need})")]
    TooFewFeatures { got: usize, need: usize },

    #[error("missing heatmap for joint {0}")]
    MissingJoint(&'static str),

    #[error("missing action grouping for image {0:?}")]
    MissingAction(String),

    #[error("empty fully-supervised set")]
    EmptyFullySupervised,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bad format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

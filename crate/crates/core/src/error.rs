use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask text is empty")]
    EmptyInput,
    #[error("invalid mask character {ch:?} at position {position}")]
    InvalidCharacter { ch: char, position: usize },
    #[error("layer index {index} out of range for {layer_count} layers")]
    IndexOutOfRange { index: usize, layer_count: usize },

    #[error("hamming weight plan has no strata")]
    ZeroStrata,
    #[error("cannot select {k} layers out of {layer_count}")]
    KExceedsL { k: usize, layer_count: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("mask has {actual} layers, expected {expected}")]
    MaskLengthMismatch { expected: usize, actual: usize },
    #[error("mask {0} is not present in the score table")]
    MaskNotInTable(String),
    #[error("utility must be strictly positive, got raw={raw}, baseline={baseline}")]
    NonPositiveUtility { raw: f64, baseline: f64 },
    #[error("layer {0} is already present in the coalition")]
    LayerAlreadyPresent(usize),

    #[error("{}parse error at line {line}: {message}", path_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },
    #[error("duplicate mask {mask} at line {line}")]
    DuplicateMask { line: usize, mask: String },
    #[error("mask at line {line} has length {actual}, expected {expected}")]
    LengthMismatch {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("score {score} at record {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("test scores have zero variance")]
    ZeroVariance,
    #[error("non-finite parameter after training step {step}")]
    NonFinite { step: usize },

    #[error("exact enumeration over {layer_count} layers exceeds the cap of {cap}")]
    TooManyLayers { layer_count: usize, cap: usize },
    #[error("estimator needs at least one hamming weight stratum")]
    EmptyStrata,
    #[error("cannot remove {requested} layers from {layer_count}")]
    RemoveCountExceedsL { requested: usize, layer_count: usize },
    #[error("pair search needs at least two layers, got {0}")]
    LTooSmall(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn with_path(self, path: &std::path::Path) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(path.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }
}

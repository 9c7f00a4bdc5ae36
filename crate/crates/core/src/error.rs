use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image file {path}: {reason}")]
    BadImage { path: PathBuf, reason: String },

    #[error("no files in {dir} match pattern {pattern}")]
    NoMatches { dir: PathBuf, pattern: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("resample rejected: {0}")]
    Resample(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("triangulation error: {0}")]
    Triangulation(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training data has no variance")]
    NoVariance,

    #[error("fit error: {0}")]
    Fit(String),

    #[error("singular Hessian in fit")]
    SingularHessian,

    #[error("dictionary parse error at line {line}: {reason}")]
    DictParse { line: usize, reason: String },

    #[error("unknown phone symbol '{phone}'")]
    UnknownPhone { phone: String },

    #[error("phone '{phone}' has no viseme class")]
    UnmappedPhone { phone: String },

    #[error("out-of-vocabulary word '{word}' (line {line_id})")]
    OovWord { word: String, line_id: usize },

    #[error("transcript error: {0}")]
    Transcript(String),

    #[error("hmm error: {0}")]
    Hmm(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed for fold {fold}, resolution {width}x{height}: {reason}")]
    SweepCell {
        stage: String,
        fold: usize,
        width: usize,
        height: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

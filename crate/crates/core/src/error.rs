use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the stacking / conformal pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("gram matrix is singular or ill-conditioned (condition estimate {condition:.3e}); base-learner predictions are collinear")]
    SingularGram { condition: f64 },

    #[error("rank-one update denominator {value:.3e} is too close to zero")]
    DenominatorNearZero { value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("fold count {folds} is invalid for {n} units (need 2 <= K <= n)")]
    BadFoldCount { folds: usize, n: usize },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(String),

    #[error("fold exclusion set of size {size} is smaller than the learner minimum {needed}")]
    FoldTooSmall { size: usize, needed: usize },

    #[error("conformal rank {rank} exceeds training size {n}; alpha is too small for this sample")]
    RankOutOfRange { rank: usize, n: usize },

    #[error("calibration set of size {size} is too small for alpha = {alpha}")]
    CalibrationTooSmall { size: usize, alpha: f64 },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("no usable rows left after cleaning ({dropped} dropped)")]
    EmptyAfterCleaning { dropped: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

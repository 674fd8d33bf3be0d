use std::path::PathBuf;

use thiserror::Error;

use crate::ClassId;

pub type Result<T, E = FdgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum FdgError {
    #[error("input contains a non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("matrix is not centered (largest per-dimension |mean| = {max_abs_mean:e})")]
    NotCentered { max_abs_mean: f64 },

    #[error("cholesky factorization of the regularized {side} matrix failed")]
    NumericalFailure { side: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("base volume {volume:e} is degenerate; relative gain is undefined")]
    DegenerateBase { volume: f64 },

    #[error("base set needs at least 2 samples, found {found}")]
    BaseTooSmall { found: usize },

    #[error("partition has no tail classes")]
    EmptyTail,

    #[error("partition has no head classes to draw from")]
    EmptyHead,

    #[error("class {class}: {source}")]
    Class {
        class: ClassId,
        #[source]
        source: Box<FdgError>,
    },

    #[error("class {0} not present")]
    MissingClass(ClassId),

    #[error("at least {needed} classes required, found {found}")]
    TooFewClasses { needed: usize, found: usize },

    #[error("class {class} has a zero sample count")]
    ZeroCount { class: ClassId },

    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),

    #[error("no tail classes: the first {head} classes already cover every class")]
    NoTailClasses { head: usize },

    #[error("no class exceeds {kappa} x {tail_count} samples relative to tail class {tail}")]
    NoRelativeHead {
        tail: ClassId,
        tail_count: usize,
        kappa: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("region {region} lies outside a {height}x{width} grid")]
    RegionOutOfBounds {
        region: String,
        height: usize,
        width: usize,
    },

    #[error("donor class has zero variance in every dimension")]
    DegenerateDonor,

    #[error("donor class needs at least 2 samples, found {found}")]
    DonorTooSmall { found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("candidate pool holds {available} samples but the quota is {quota}")]
    InsufficientPool { available: usize, quota: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },

    #[error("file is truncated: {0}")]
    TruncatedFile(String),

    #[error("bad magic bytes or version")]
    BadMagic,

    #[error("label count {labels} does not match sample count {samples}")]
    LabelCountMismatch { labels: usize, samples: usize },

    #[error("unknown file format for {0}")]
    UnknownFormat(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FdgError {
    pub(crate) fn for_class(self, class: ClassId) -> Self {
        FdgError::Class {
            class,
            source: Box::new(self),
        }
    }

    /// Strips class annotations.
    pub fn root(&self) -> &FdgError {
        match self {
            FdgError::Class { source, .. } => source.root(),
            other => other,
        }
    }
}

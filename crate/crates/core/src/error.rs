use std::path::PathBuf;

use thiserror::Error;

use crate::volume::Shape3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape([usize; 3]),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape3, right: Shape3 },

    #[error("expected {expected} values for shape {shape}, got {found}")]
    DataLength { shape: Shape3, expected: usize, found: usize },

    #[error("affinity at index {index} is {value}, outside [0, 1]")]
    AffinityOutOfRange { index: usize, value: f64 },

    #[error("edge {voxel:?} along {axis} has no predecessor inside {shape}")]
    EdgeOutOfBounds { voxel: [usize; 3], axis: &'static str, shape: Shape3 },

    #[error("{path}: bad magic {found:?}, expected \"vgrid1\"")]
    BadMagic { path: PathBuf, found: String },

    #[error("{path}: {reason}")]
    HeaderMismatch { path: PathBuf, reason: String },

    #[error("{path}: payload truncated, expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}: payload has {found} bytes, expected {expected}")]
    PayloadSize { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: malformed header: {source}")]
    Header { path: PathBuf, source: serde_json::Error },

    #[error("brute-force oracle limited to {limit} voxels, volume has {voxels}")]
    OracleTooLarge { voxels: usize, limit: usize },

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),

    #[error("bin count must be in 1..=65536, got {0}")]
    InvalidBinCount(usize),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("invalid merge function {0:?}")]
    InvalidMergeFunction(String),

    #[error("merge scores decreased from {previous} to {current}")]
    NonMonotoneHistory { previous: f64, current: f64 },

    #[error("contingency table is empty")]
    EmptyTable,

    #[error("metric inputs must be non-negative, got voi {voi} and arand {arand}")]
    NegativeMetric { voi: f64, arand: f64 },

    #[error("cannot place {regions} regions in {voxels} voxels")]
    TooManyRegions { regions: usize, voxels: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("merge history: {0}")]
    History(String),

    #[error("benchmark at {edges} edges: bucket and heap agglomeration disagree")]
    HistoryMismatch { edges: usize },

    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid_shape",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::DataLength { .. } => "data_length",
            Error::AffinityOutOfRange { .. } => "affinity_out_of_range",
            Error::EdgeOutOfBounds { .. } => "edge_out_of_bounds",
            Error::BadMagic { .. } => "bad_magic",
            Error::HeaderMismatch { .. } => "header_mismatch",
            Error::Truncated { .. } => "truncated",
            Error::PayloadSize { .. } => "payload_size",
            Error::Io { .. } => "io",
            Error::Header { .. } => "header",
            Error::OracleTooLarge { .. } => "oracle_too_large",
            Error::ScoreOutOfRange(_) => "score_out_of_range",
            Error::InvalidThreshold(_) => "invalid_threshold",
            Error::InvalidBinCount(_) => "invalid_bin_count",
            Error::EmptyHistogram => "empty_histogram",
            Error::InvalidMergeFunction(_) => "invalid_merge_function",
            Error::NonMonotoneHistory { .. } => "non_monotone_history",
            Error::EmptyTable => "empty_table",
            Error::NegativeMetric { .. } => "negative_metric",
            Error::TooManyRegions { .. } => "too_many_regions",
            Error::Config(_) => "config",
            Error::History(_) => "history",
            Error::HistoryMismatch { .. } => "history_mismatch",
            Error::Stage { .. } => "stage",
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

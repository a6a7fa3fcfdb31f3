// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed {kind}: {len} bytes is not a multiple of {record} byte records")]
    Malformed {
        path: PathBuf,
        kind: &'static str,
        len: u64,
        record: usize,
    },
    #[error("{0}")]
    Parse(String),
    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),
    #[error("scan {scan} has no matching label file {label}")]
    MissingLabel { scan: PathBuf, label: PathBuf },
    #[error("label count {labels} does not match scan point count {points}")]
    LabelCount { labels: usize, points: usize },
    #[error("expected {expected} SSL records, got {actual}")]
    RecordCount { expected: usize, actual: usize },
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },
    #[error("degenerate point triple (collinear or coincident)")]
    DegenerateSample,
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("slice {slice}: {source}")]
    Slice {
        slice: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

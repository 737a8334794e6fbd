use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by mesh loading, training, analysis and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-triangular face at line {line} ({count} vertices)")]
    NonTriangularFace { line: usize, count: usize },

    #[error("non-manifold edge ({a}, {b}) shared by {count} faces")]
    NonManifoldEdge { a: usize, b: usize, count: usize },

    #[error("degenerate (zero-area) face {0}")]
    DegenerateFace(usize),

    #[error("mesh bounding box has zero extent")]
    ZeroExtent,

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("faces {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in loss term `{term}`{}", iter.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    NonFinite { term: String, iter: Option<usize> },

    #[error("one-ring of vertex {0} is not a topological disk")]
    NonDiskOneRing(usize),

    #[error("invalid quad {quad}: {message}")]
    InvalidQuad { quad: usize, message: String },

    #[error("degenerate corner in quad {0} (zero-length edge)")]
    DegenerateCorner(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

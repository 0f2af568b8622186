use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got {0:?}")]
    NonFinite([f64; 4]),
    #[error("box must satisfy x2 > x1 and y2 > y1, got {0:?}")]
    Degenerate([f64; 4]),
    #[error("depth map holds {actual} values, expected {expected}")]
    DepthShape { expected: usize, actual: usize },
    #[error("depth values must be finite and non-negative, got {0}")]
    InvalidDepth(f64),
    #[error("invalid parameter: {0}")]
    Param(&'static str),
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("frame {got} presented after frame {last}; frames must strictly increase")]
    FrameOrder { last: u32, got: u32 },
    #[error("sequence has {detections} detection frames but {depths} depth frames")]
    LengthMismatch { detections: usize, depths: usize },
    #[error("invalid tracker parameter: {0}")]
    Param(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth spans {gt} frames but predictions span {pred}")]
    FrameRange { gt: u32, pred: u32 },
    #[error("frame {frame} lies outside the declared range 1..={frames}")]
    FrameOutOfRange { frame: u32, frames: u32 },
    #[error("benchmark evaluation needs at least one sequence")]
    EmptyBenchmark,
}

/// Parse and file errors. Every variant that comes from text carries the
/// source path and 1-based line number.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}:{column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate record for frame {frame}, id {id} (first seen on line {first_line})")]
    Duplicate {
        path: PathBuf,
        line: usize,
        frame: u32,
        id: u32,
        first_line: usize,
    },
    #[error("{path}: {message}")]
    Depth { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

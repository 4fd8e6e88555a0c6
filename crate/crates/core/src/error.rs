use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pixel ({u}, {v}) outside {width}x{height} depth map")]
    PixelOutOfRange {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("non-positive or non-finite depth {0}")]
    InvalidDepth(f64),

    #[error("no valid depth inside the box")]
    NoValidDepth,

    #[error("box does not cover any image pixel")]
    EmptyRegion,

    #[error("projected region has no valid points")]
    NoValidPoints,

    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),

    #[error("motion transform is singular")]
    SingularTransform,

    #[error("frame {got} arrived after frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },

    #[error("filter state is not initialized")]
    Uninitialized,

    #[error("detection confidence must be positive, got {0}")]
    ZeroConfidence(f64),

    #[error("series is empty")]
    EmptySeries,

    #[error("series mean is zero")]
    ZeroMean,

    #[error("series needs at least 2 values, got {0}")]
    TooShort(usize),

    #[error("objective returned {value} at ({}, {})", point[0], point[1])]
    ObjectiveNonFinite { point: [f64; 2], value: f64 },

    #[error("kernel matrix is degenerate (all training points identical?)")]
    DegenerateKernel,

    #[error("pothole {0} is never visible")]
    PotholeNeverVisible(usize),

    #[error("bad PFM magic {0:?} (only grayscale 'Pf' is accepted)")]
    BadMagic(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("truncated PFM payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u32),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_frame(self, frame: u64) -> Self {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                frame,
                source: Box::new(e),
            },
        }
    }
}

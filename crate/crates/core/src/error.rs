use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("box ({x0},{y0},{x1},{y1}) outside {width}x{height} grid")]
    Bounds {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("label {value} at (row {row}, col {col}) is not a valid class for C={classes}")]
    LabelValue {
        value: u8,
        row: usize,
        col: usize,
        classes: usize,
    },

    #[error("{path}: label {value} at (row {row}, col {col}) is not a valid class for C={classes}")]
    LabelFile {
        path: PathBuf,
        value: u8,
        row: usize,
        col: usize,
        classes: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no supervised positions")]
    NoSupervision,

    #[error("no annotated pixels")]
    NoAnnotatedPixels,

    #[error("training diverged at iteration {0}")]
    Diverged(usize),

    #[error("could not place objects in image {0} after bounded retries")]
    Placement(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than by a failure inside
    /// the toolkit. The command-line front end maps this to exit code 1.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            Error::Diverged(_) => false,
            Error::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            _ => true,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    /// A box corner lies at or behind the image plane, so the perspective
    /// projection is undefined.
    #[error("box corner at depth {depth} is behind the camera")]
    BehindCamera { depth: f64 },

    #[error("ground-truth rectangle has zero area")]
    DegenerateGroundTruth,

    #[error("polygon vertex at z = {z} is not in front of the vehicle")]
    BehindVehicle { z: f64 },

    #[error("polygon contains the vehicle origin")]
    OriginInside,

    #[error("ground-truth representative point coincides with the origin")]
    GroundTruthAtOrigin,

    #[error("TP measure {measure} needs field `{field}` on every matched pair")]
    MissingAnnotationField {
        measure: &'static str,
        field: &'static str,
    },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("series lengths differ or are below two ({0} vs {1})")]
    SeriesLength(usize, usize),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("frame `{frame_id}`: {source}")]
    Frame {
        frame_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the file system rather than by content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Frame { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

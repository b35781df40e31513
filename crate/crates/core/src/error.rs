use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },
    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("image has zero area ({width}x{height})")]
    ZeroAreaImage { width: usize, height: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    PixelBufferSize { expected: usize, actual: usize },
    #[error("candidate pair needs two distinct ids, got {0:?} twice")]
    SelfPair(String),
    #[error("descriptor dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("non-finite value in descriptor/keypoint data for image {image_id}")]
    NonFiniteValue { image_id: String },
    #[error("keypoint {index} of image {image_id} at ({x}, {y}) lies outside {width}x{height}")]
    CoordOutOfBounds {
        image_id: String,
        index: usize,
        x: f32,
        y: f32,
        width: usize,
        height: usize,
    },
    #[error("point ({x}, {y}) outside rotated frame {width}x{height}")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid orientation tag {0} (expected 0, 90, 180 or 270)")]
    InvalidOrientation(u32),
    #[error("no global descriptor for image {0}")]
    MissingDescriptor(String),
    #[error("no features for image {0}")]
    MissingFeatures(String),
    #[error("unknown image id {0}")]
    UnknownId(String),
    #[error("invalid clustering: {0}")]
    InvalidClustering(String),
    #[error("image universes differ; only in ground truth: {only_gt:?}; only in prediction: {only_pred:?}")]
    UniverseMismatch {
        only_gt: Vec<String>,
        only_pred: Vec<String>,
    },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("features for {found} passed where {expected} was expected")]
    FeatureIdMismatch { expected: String, found: String },
    #[error("pair ({0}, {1}) not found in matches file")]
    PairNotFound(String, String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

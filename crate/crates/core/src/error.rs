use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("shape mismatch: belief is {belief:?}, likelihood is {likelihood:?}")]
    ShapeMismatch {
        belief: (usize, usize),
        likelihood: (usize, usize),
    },
    #[error("degenerate correction: belief-likelihood product sums to {mass:e}")]
    Degenerate { mass: f64 },
    #[error("invalid motion kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("grid {height}x{width} is too small (need at least 16x16)")]
    GridTooSmall { height: usize, width: usize },
    #[error("could not place object {index} after {attempts} attempts")]
    PlacementExhausted { index: usize, attempts: usize },
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("scene file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{what} is truncated: expected {expected} bytes, found {found}")]
    Truncated {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("checksum mismatch in scene {index}")]
    Checksum { index: usize },
    #[error("checksum mismatch in transitions file")]
    TransitionsChecksum,
    #[error("dataset already exists at {0} (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("dataset not found at {0}")]
    Missing(PathBuf),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("scene index {index} out of range ({count} scenes)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("observation has length {got}, expected {expected}")]
    ObservationLength { expected: usize, got: usize },
    #[error("image is {got:?}, expected {expected:?}")]
    ImageShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] tactloc_numerics::NumericsError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] tactloc_numerics::NumericsError),
    #[error("config: {0}")]
    Config(String),
    #[error("training: {0}")]
    Training(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("size mismatch in {}: expected {expected} bytes, found {found}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image decode failure on {}: {message}", path.display())]
    ImageDecode { path: PathBuf, message: String },

    #[error("invalid label pair ({0}, {1})")]
    InvalidPair(u32, u32),
    #[error("seed {0:?} lies outside the flood region")]
    SeedOutsideRegion((usize, usize)),
    #[error("watershed seeds coincide at {0:?}")]
    IdenticalSeeds((usize, usize)),

    #[error("section {0} has no ground truth")]
    MissingGroundTruth(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("cannot score an empty patch set")]
    EmptySet,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptBlob(String),

    #[error("segment too small or thin to place opposite seeds")]
    DegenerateSegment,

    #[error("stale candidate: {0}")]
    StaleCandidate(String),
    #[error("label id {0} already in use")]
    IdCollision(u32),
    #[error("oracle decisions require ground truth")]
    GroundTruthRequired,

    #[error("all pixels were excluded from the comparison")]
    EmptyOverlap,
    #[error("labels must contain both classes")]
    DegenerateLabels,

    #[error("cannot plant {requested} errors; only {available} feasible")]
    InfeasibleCorruption { requested: usize, available: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::IoFailure { path, source }
        }
    }
}

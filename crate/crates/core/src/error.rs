use std::io;

use thiserror::Error;

use crate::templates::Modality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::code`] gives the stable, machine-readable name used by the CLI
/// (stderr) and the HTTP service (`code` field of error bodies).
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is zero or degenerate")]
    ZeroVector,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("modality mismatch: expected {expected}, found {found}")]
    ModalityMismatch { expected: Modality, found: Modality },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("template is not normalized")]
    NotNormalized,
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("invalid operating FAR {0}: must lie in (0, 1)")]
    InvalidFar(f64),
    #[error("invalid grid step {0}: must lie in (0, 0.5]")]
    InvalidGridStep(f64),
    #[error("invalid fusion weights: {0}")]
    InvalidWeights(String),
    #[error("probe set is empty")]
    EmptyProbeSet,
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("unknown record id `{0}`")]
    UnknownRecord(String),
    #[error("probe lacks a {0} template")]
    MissingProbeTemplate(Modality),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("colour catalog is empty")]
    EmptyCatalog,
    #[error("unknown colour label `{0}`")]
    UnknownColourLabel(String),
    #[error("samples lack a genuine or an impostor class")]
    MissingClass,
    #[error("true mate `{mate}` of probe `{probe}` missing from an untruncated ranking")]
    MateMissing { probe: String, mate: String },
    #[error("manifest violation: {0}")]
    ManifestViolation(String),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("track has no detections")]
    EmptyTrack,
    #[error("track mixes detections of different tracks or cameras")]
    MixedTrack,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("configuration has no confounder")]
    MissingConfounder,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(io::Error),
}

impl Error {
    /// Stable error name, e.g. `DuplicateId`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZeroVector",
            Error::NonFinite(_) => "NonFinite",
            Error::Format(_) | Error::Line { .. } => "FormatError",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::ModalityMismatch { .. } => "ModalityMismatch",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotNormalized => "NotNormalized",
            Error::EmptyCalibrationSet => "EmptyCalibrationSet",
            Error::InvalidFar(_) => "InvalidFar",
            Error::InvalidGridStep(_) => "InvalidGridStep",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::EmptyProbeSet => "EmptyProbeSet",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownRecord(_) => "UnknownRecord",
            Error::MissingProbeTemplate(_) => "MissingProbeTemplate",
            Error::EmptyGallery => "EmptyGallery",
            Error::EmptyCatalog => "EmptyCatalog",
            Error::UnknownColourLabel(_) => "UnknownColourLabel",
            Error::MissingClass => "MissingClass",
            Error::MateMissing { .. } => "MateMissing",
            Error::ManifestViolation(_) => "ManifestViolation",
            Error::InvalidRate(_) => "InvalidRate",
            Error::EmptyTrack => "EmptyTrack",
            Error::MixedTrack => "MixedTrack",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MissingConfounder => "MissingConfounder",
            Error::Io(_) => "IoError",
        }
    }
}

// Not `#[from]`: the message already carries the io error, and a source link
// would print it twice in chained reports.
impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

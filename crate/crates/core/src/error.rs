use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("softmax over an empty row")]
    EmptyRow,
    #[error("kernel width {width} exceeds sequence length {len}")]
    KernelTooLong { width: usize, len: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("bad frame geometry: {0}")]
    BadFrameGeometry(String),
    #[error("audio sequence too short: need at least {required} steps, got {got}")]
    SequenceTooShort { required: usize, got: usize },
    #[error("attention needs at least one key")]
    EmptyKeys,
    #[error("sample `{clip}` is missing its {modality} input")]
    MissingModality {
        clip: String,
        modality: &'static str,
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("missing feature file for `{clip}`: {path}")]
    MissingFile { clip: String, path: PathBuf },
    #[error("dimension mismatch for `{clip}`: {detail}")]
    DimMismatch { clip: String, detail: String },
    #[error("unsupported format version {found} in {what} (expected {expected})")]
    UnknownVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("bad label for `{clip}`: {detail}")]
    BadLabel { clip: String, detail: String },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("LOSO needs at least 2 distinct subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("subject `{0}` leaked into its own training fold")]
    SubjectLeakage(String),
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no predictions to score")]
    Empty,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("clips present in only one annotation file: {0:?}")]
    UnmatchedClips(Vec<String>),
    #[error("checkpoint does not match model layout: {0}")]
    CheckpointMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configs, files, labels)
    /// as opposed to failures during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidSpec(_)
                | Error::MissingFile { .. }
                | Error::DimMismatch { .. }
                | Error::UnknownVersion { .. }
                | Error::BadLabel { .. }
                | Error::Format { .. }
                | Error::MissingModality { .. }
                | Error::TooFewSubjects(_)
                | Error::UnmatchedClips(_)
                | Error::CheckpointMismatch(_)
                | Error::BadFrameGeometry(_)
                | Error::SequenceTooShort { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

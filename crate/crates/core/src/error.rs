use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),
    #[error("invalid head pose: {0}")]
    InvalidPose(String),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("frame {0} has a pose but no face")]
    PoseWithoutFace(u64),
    #[error("invalid mouse event: {0}")]
    InvalidMouseEvent(String),
    #[error("invalid question segment: {0}")]
    InvalidSegment(String),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate frame index {0}")]
    DuplicateFrame(u64),
    #[error("unknown mouse event kind {kind:?} on line {line}")]
    UnknownEventKind { line: usize, kind: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("sample stride must be at least 1, got {0}")]
    InvalidStride(u32),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("student {student_id}: {source}")]
    Student {
        student_id: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("unknown student {0:?}")]
    UnknownStudent(String),
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("plan item {index}: {message}")]
    InvalidPlan { index: usize, message: String },
    #[error("invalid generator parameters: {0}")]
    InvalidProfile(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

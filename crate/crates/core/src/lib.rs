//! Detection and analytics engine for webcam- and mouse-based online exam
//! proctoring.
//!
//! Sessions are ingested from JSONL wire files, suspected cases are detected
//! per sampled frame and mouse event, and per-question risk is a weighted sum
//! of counts normalized across the cohort.

pub mod analytics;
pub mod detect;
pub mod error;
pub mod ingest;
pub mod model;
pub mod par;
pub mod report;
pub mod synth;

pub use analytics::{analyze_exam, ExamAnalysis};
pub use detect::{detect_exam, detect_session, SessionDetection};
pub use error::{AnalysisError, IngestError, ModelError, SynthError};
pub use ingest::{load_exam, load_exam_from_path, Exam, ExamManifest};
pub use model::*;
pub use par::ExecMode;

//! Loaded exams and their analysis snapshots.
//!
//! Each exam holds an `Arc` to its current snapshot. Readers clone the `Arc`
//! once per request and never see a later revision mid-response. Config
//! updates take the exam's writer lock, recompute off the async runtime, and
//! swap the pointer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use proctor_core::ingest::{self, Exam, ExamManifest};
use proctor_core::{analyze_exam, ConfigPatch, DetectionConfig, ExamAnalysis, ExecMode};
use serde::{Deserialize, Serialize};

use crate::capture::CaptureStore;
use crate::error::ApiError;

/// One immutable analysis result.
#[derive(Debug)]
pub struct ExamSnapshot {
    pub exam_id: String,
    pub revision: u64,
    pub config: DetectionConfig,
    pub exam: Exam,
    pub analysis: ExamAnalysis,
    pub created_at_ms: u128,
}

pub struct ExamSlot {
    manifest_path: PathBuf,
    current: RwLock<Arc<ExamSnapshot>>,
    writer: tokio::sync::Mutex<()>,
}

impl ExamSlot {
    pub fn snapshot(&self) -> Arc<ExamSnapshot> {
        Arc::clone(&self.current.read().expect("snapshot lock poisoned"))
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    fn swap(&self, next: ExamSnapshot) -> Arc<ExamSnapshot> {
        let next = Arc::new(next);
        *self.current.write().expect("snapshot lock poisoned") = Arc::clone(&next);
        next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSummary {
    pub exam_id: String,
    pub revision: u64,
    pub students: usize,
    pub questions: usize,
    pub manifest: PathBuf,
}

/// Shared service state.
pub struct AppState {
    exams: RwLock<BTreeMap<String, Arc<ExamSlot>>>,
    pub captures: CaptureStore,
    mode: ExecMode,
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(ExecMode::default())
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Reads and analyzes the exam at `path` under `config`.
pub fn compute(
    path: &Path,
    config: &DetectionConfig,
    revision: u64,
    mode: ExecMode,
) -> Result<ExamSnapshot, ApiError> {
    let manifest = ExamManifest::from_path(path).map_err(|e| ApiError::IngestFailed(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let exam = ingest::load_exam(&manifest, base, config, mode).map_err(|e| match e {
        ingest_err @ proctor_core::IngestError::Model(proctor_core::ModelError::InvalidConfig(_)) => {
            ApiError::InvalidConfig(ingest_err.to_string())
        }
        other => ApiError::IngestFailed(other.to_string()),
    })?;
    let analysis = analyze_exam(&exam, config, mode);
    Ok(ExamSnapshot {
        exam_id: exam.exam_id.clone(),
        revision,
        config: *config,
        exam,
        analysis,
        created_at_ms: now_ms(),
    })
}

impl AppState {
    pub fn new(mode: ExecMode) -> Self {
        Self { exams: RwLock::new(BTreeMap::new()), captures: CaptureStore::default(), mode }
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn slot(&self, exam_id: &str) -> Result<Arc<ExamSlot>, ApiError> {
        self.exams
            .read()
            .expect("registry lock poisoned")
            .get(exam_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("exam {exam_id:?} is not loaded")))
    }

    pub fn snapshot(&self, exam_id: &str) -> Result<Arc<ExamSnapshot>, ApiError> {
        self.slot(exam_id).map(|s| s.snapshot())
    }

    pub fn summaries(&self) -> Vec<ExamSummary> {
        self.exams
            .read()
            .expect("registry lock poisoned")
            .iter()
            .map(|(id, slot)| {
                let snap = slot.snapshot();
                ExamSummary {
                    exam_id: id.clone(),
                    revision: snap.revision,
                    students: snap.exam.sessions.len(),
                    questions: snap.exam.questions.len(),
                    manifest: slot.manifest_path.clone(),
                }
            })
            .collect()
    }

    /// Loads the manifest at `path` with the default config and registers it
    /// under its own exam id. Blocking; intended for startup.
    pub fn load_blocking(&self, path: &Path) -> Result<Arc<ExamSnapshot>, ApiError> {
        let snapshot = compute(path, &DetectionConfig::default(), 1, self.mode)?;
        let exam_id = snapshot.exam_id.clone();
        Ok(self.install(&exam_id, path, snapshot))
    }

    fn install(&self, exam_id: &str, path: &Path, snapshot: ExamSnapshot) -> Arc<ExamSnapshot> {
        let mut exams = self.exams.write().expect("registry lock poisoned");
        match exams.get(exam_id) {
            Some(slot) if slot.manifest_path == path => slot.swap(snapshot),
            _ => {
                let snapshot = Arc::new(snapshot);
                let slot = ExamSlot {
                    manifest_path: path.to_owned(),
                    current: RwLock::new(Arc::clone(&snapshot)),
                    writer: tokio::sync::Mutex::new(()),
                };
                exams.insert(exam_id.to_owned(), Arc::new(slot));
                snapshot
            }
        }
    }

    /// Loads or reloads `exam_id` from `path`. A reload keeps the exam's
    /// current config and advances its revision.
    pub async fn load(self: &Arc<Self>, exam_id: &str, path: PathBuf) -> Result<Arc<ExamSnapshot>, ApiError> {
        let existing = self.slot(exam_id).ok();
        let _guard = match &existing {
            Some(slot) => Some(slot.writer.lock().await),
            None => None,
        };
        let (config, revision) = match &existing {
            Some(slot) => {
                let snap = slot.snapshot();
                (snap.config, snap.revision + 1)
            }
            None => (DetectionConfig::default(), 1),
        };
        let mode = self.mode;
        let p = path.clone();
        let snapshot = tokio::task::spawn_blocking(move || compute(&p, &config, revision, mode))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
        if snapshot.exam_id != exam_id {
            return Err(ApiError::InvalidRequest(format!(
                "manifest describes exam {:?}, not {exam_id:?}",
                snapshot.exam_id
            )));
        }
        Ok(self.install(exam_id, &path, snapshot))
    }

    /// Applies `patch` and recomputes the exam. Invalid patches leave the
    /// current snapshot untouched. A patch that changes nothing returns the
    /// current snapshot.
    pub async fn update_config(
        self: &Arc<Self>,
        exam_id: &str,
        patch: ConfigPatch,
    ) -> Result<Arc<ExamSnapshot>, ApiError> {
        let slot = self.slot(exam_id)?;
        let _guard = slot.writer.lock().await;
        let current = slot.snapshot();
        let config = current.config.patched(&patch).map_err(|e| ApiError::InvalidConfig(e.to_string()))?;
        if config == current.config {
            return Ok(current);
        }
        let mode = self.mode;
        let path = slot.manifest_path.clone();
        let revision = current.revision + 1;
        let next = tokio::task::spawn_blocking(move || compute(&path, &config, revision, mode))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
        Ok(slot.swap(next))
    }
}

//! Wire formats and exam loading.
//!
//! Frame observations and mouse events are newline-delimited JSON, one record
//! per line. The manifest is a single JSON document per exam whose file paths
//! are resolved relative to the manifest's directory.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, ModelError};
use crate::model::{
    BoundingBox, DetectionConfig, Face, FrameObservation, HeadPose, MouseEvent, MouseEventKind,
    QuestionSegment, Resolution, SessionRecord, DEFAULT_FPS,
};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

/// One line of a frame-observation file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub face: Option<FaceRecord>,
    pub pose: Option<PoseRecord>,
}

impl From<&FrameObservation> for FrameRecord {
    fn from(obs: &FrameObservation) -> Self {
        FrameRecord {
            frame_index: obs.frame_index,
            face: obs.face.map(|f| FaceRecord {
                x_min: f.bbox.x_min,
                y_min: f.bbox.y_min,
                x_max: f.bbox.x_max,
                y_max: f.bbox.y_max,
                confidence: f.confidence,
            }),
            pose: obs.pose.map(|p| PoseRecord { pitch: p.pitch, yaw: p.yaw, roll: p.roll }),
        }
    }
}

/// One line of a mouse-event file, as emitted by the capture plugin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MouseRecord {
    pub ts_ms: i64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl From<&MouseEvent> for MouseRecord {
    fn from(e: &MouseEvent) -> Self {
        MouseRecord { ts_ms: e.timestamp_ms, kind: e.kind.as_str().to_owned(), x: e.x, y: e.y }
    }
}

impl MouseRecord {
    pub fn to_event(&self, line: usize) -> Result<MouseEvent, IngestError> {
        let kind = MouseEventKind::parse(&self.kind)
            .ok_or_else(|| IngestError::UnknownEventKind { line, kind: self.kind.clone() })?;
        MouseEvent::new(self.ts_ms, kind, self.x, self.y)
            .map_err(|source| IngestError::Invalid { line, source })
    }
}

fn frame_from_record(rec: FrameRecord, fps: f64) -> Result<FrameObservation, ModelError> {
    let face = rec
        .face
        .map(|f| Face::new(BoundingBox::new(f.x_min, f.y_min, f.x_max, f.y_max)?, f.confidence))
        .transpose()?;
    let pose = rec.pose.map(|p| HeadPose::new(p.pitch, p.yaw, p.roll)).transpose()?;
    FrameObservation::new(rec.frame_index, fps, face, pose)
}

/// Iterates non-blank lines with 1-based line numbers.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), IngestError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(IngestError::Malformed { line: i + 1, message: e.to_string() })),
    })
}

/// Parses a frame-observation stream. Timestamps are derived from `fps`.
/// The result is sorted by frame index; duplicates are rejected.
pub fn parse_frame_observations<R: BufRead>(
    reader: R,
    fps: f64,
) -> Result<Vec<FrameObservation>, IngestError> {
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let rec: FrameRecord = serde_json::from_str(&text)
            .map_err(|e| IngestError::Malformed { line, message: e.to_string() })?;
        let obs = frame_from_record(rec, fps).map_err(|source| IngestError::Invalid { line, source })?;
        out.push(obs);
    }
    out.sort_by_key(|o| o.frame_index);
    if let Some(dup) = out.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
        return Err(IngestError::DuplicateFrame(dup[0].frame_index));
    }
    Ok(out)
}

/// Parses a mouse-event stream, stably ordered by timestamp.
pub fn parse_mouse_events<R: BufRead>(reader: R) -> Result<Vec<MouseEvent>, IngestError> {
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let rec: MouseRecord = serde_json::from_str(&text)
            .map_err(|e| IngestError::Malformed { line, message: e.to_string() })?;
        out.push(rec.to_event(line)?);
    }
    out.sort_by_key(|e| e.timestamp_ms);
    Ok(out)
}

pub fn write_frame_observations<W: Write>(mut w: W, obs: &[FrameObservation]) -> std::io::Result<()> {
    for o in obs {
        serde_json::to_writer(&mut w, &FrameRecord::from(o))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_mouse_events<W: Write>(mut w: W, events: &[MouseEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &MouseRecord::from(e))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Keeps frames whose index is a multiple of `stride`.
pub fn sample_frames(
    observations: &[FrameObservation],
    stride: u32,
) -> Result<Vec<FrameObservation>, IngestError> {
    if stride < 1 {
        return Err(IngestError::InvalidStride(stride));
    }
    let stride = u64::from(stride);
    Ok(observations.iter().filter(|o| o.frame_index % stride == 0).cloned().collect())
}

/// Clears face and pose on every frame whose confidence is not strictly above
/// `floor`. Frames are never removed.
pub fn filter_low_confidence(observations: &[FrameObservation], floor: f64) -> Vec<FrameObservation> {
    observations
        .iter()
        .map(|o| {
            let mut o = o.clone();
            if o.face.is_some_and(|f| f.confidence <= floor) {
                o.clear_face();
            }
            o
        })
        .collect()
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentEntry {
    pub student_id: String,
    /// Frame-observation file, relative to the manifest.
    pub observations: PathBuf,
    /// Mouse-event file, relative to the manifest.
    pub mouse_events: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
    pub segments: Vec<QuestionSegment>,
    pub score_fraction: f64,
    pub duration_ms: i64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamManifest {
    pub exam_id: String,
    pub time_limit_ms: i64,
    /// Question ids in exam order.
    pub questions: Vec<String>,
    pub students: Vec<StudentEntry>,
}

impl ExamManifest {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| IngestError::Manifest { path: path.to_owned(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let err = |message: String| IngestError::Manifest { path: PathBuf::new(), message };
        let questions: HashSet<&str> = self.questions.iter().map(String::as_str).collect();
        if questions.len() != self.questions.len() {
            return Err(err("duplicate question id".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.students {
            if !seen.insert(s.student_id.as_str()) {
                return Err(err(format!("duplicate student id {:?}", s.student_id)));
            }
            for seg in &s.segments {
                if !questions.contains(seg.question_id.as_str()) {
                    return Err(IngestError::Student {
                        student_id: s.student_id.clone(),
                        source: Box::new(err(format!("unknown question id {:?}", seg.question_id))),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A fully loaded, validated exam. Sessions are sorted by student id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exam {
    pub exam_id: String,
    pub questions: Vec<String>,
    pub time_limit_ms: i64,
    pub sessions: Vec<SessionRecord>,
}

impl Exam {
    pub fn session(&self, student_id: &str) -> Option<&SessionRecord> {
        self.sessions
            .binary_search_by(|s| s.student_id.as_str().cmp(student_id))
            .ok()
            .map(|i| &self.sessions[i])
    }

    pub fn question_index(&self, question_id: &str) -> Option<usize> {
        self.questions.iter().position(|q| q == question_id)
    }
}

fn open_buffered(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.to_owned(), source })
}

/// Reads one student's files and applies sampling and confidence filtering.
pub fn load_session(
    entry: &StudentEntry,
    exam_id: &str,
    time_limit_ms: i64,
    base_dir: &Path,
    config: &DetectionConfig,
) -> Result<SessionRecord, IngestError> {
    let obs_path = base_dir.join(&entry.observations);
    let observations = parse_frame_observations(open_buffered(&obs_path)?, entry.fps)
        .map_err(|e| with_path(e, &obs_path))?;
    let mouse_path = base_dir.join(&entry.mouse_events);
    let mouse_events =
        parse_mouse_events(open_buffered(&mouse_path)?).map_err(|e| with_path(e, &mouse_path))?;

    let sampled = sample_frames(&observations, config.sample_stride)?;
    let observations = filter_low_confidence(&sampled, config.confidence_floor);

    let mut segments = entry.segments.clone();
    segments.sort_by_key(|s| s.start_ms);
    let session = SessionRecord {
        student_id: entry.student_id.clone(),
        exam_id: exam_id.to_owned(),
        fps: entry.fps,
        resolution: entry.resolution,
        observations,
        mouse_events,
        segments,
        score_fraction: entry.score_fraction,
        duration_ms: entry.duration_ms,
        time_limit_ms,
        video: entry.video.clone(),
    };
    session.validate()?;
    Ok(session)
}

fn with_path(e: IngestError, path: &Path) -> IngestError {
    match e {
        IngestError::Io { .. } => e,
        other => IngestError::Manifest { path: path.to_owned(), message: other.to_string() },
    }
}

/// Loads every student of a manifest. Any failing student aborts the whole
/// load; the error names the first failing student in manifest order.
pub fn load_exam(
    manifest: &ExamManifest,
    base_dir: &Path,
    config: &DetectionConfig,
    mode: ExecMode,
) -> Result<Exam, IngestError> {
    config.validate()?;
    manifest.validate()?;
    let mut sessions = par::try_map_collect(mode, &manifest.students, |entry| {
        load_session(entry, &manifest.exam_id, manifest.time_limit_ms, base_dir, config).map_err(
            |source| IngestError::Student { student_id: entry.student_id.clone(), source: Box::new(source) },
        )
    })?;
    sessions.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    Ok(Exam {
        exam_id: manifest.exam_id.clone(),
        questions: manifest.questions.clone(),
        time_limit_ms: manifest.time_limit_ms,
        sessions,
    })
}

/// Reads the manifest at `path` and loads the exam it describes.
pub fn load_exam_from_path(
    path: &Path,
    config: &DetectionConfig,
    mode: ExecMode,
) -> Result<Exam, IngestError> {
    let manifest = ExamManifest::from_path(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_exam(&manifest, base, config, mode)
}

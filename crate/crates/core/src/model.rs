//! Domain types shared by ingestion, detection, analytics and the service.
//!
//! Timestamps are integer milliseconds from session start. Everything here is
//! immutable after construction and validation.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Face rectangle in video pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let bbox = Self { x_min, y_min, x_max, y_max };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidBoundingBox("non-finite coordinate".into()));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(ModelError::InvalidBoundingBox(format!(
                "degenerate box [{}, {}, {}, {}]",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn fits_within(&self, resolution: Resolution) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= resolution.width as f64
            && self.y_max <= resolution.height as f64
    }
}

/// Head rotation in degrees.
///
/// `roll` is carried for completeness but never used by detection: rotation
/// about the camera axis does not change where the student is looking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl HeadPose {
    /// Detection ignores roll.
    pub const ROLL_USED_IN_DETECTION: bool = false;

    pub fn new(pitch: f64, yaw: f64, roll: f64) -> Result<Self, ModelError> {
        let pose = Self { pitch, yaw, roll };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [("pitch", self.pitch), ("yaw", self.yaw), ("roll", self.roll)] {
            if !v.is_finite() || !(-180.0..=180.0).contains(&v) {
                return Err(ModelError::InvalidPose(format!("{name} = {v} outside [-180, 180]")));
            }
        }
        Ok(())
    }
}

/// A detected face with the detector's confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Face {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::InvalidConfidence(confidence));
        }
        bbox.validate()?;
        Ok(Self { bbox, confidence })
    }
}

/// One video frame after face detection and pose estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub frame_index: u64,
    pub timestamp_ms: i64,
    pub face: Option<Face>,
    pub pose: Option<HeadPose>,
}

impl FrameObservation {
    pub fn new(
        frame_index: u64,
        fps: f64,
        face: Option<Face>,
        pose: Option<HeadPose>,
    ) -> Result<Self, ModelError> {
        if pose.is_some() && face.is_none() {
            return Err(ModelError::PoseWithoutFace(frame_index));
        }
        Ok(Self { frame_index, timestamp_ms: frame_timestamp_ms(frame_index, fps), face, pose })
    }

    pub fn has_face(&self) -> bool {
        self.face.is_some()
    }

    /// Drops face and pose, leaving the frame slot in place.
    pub fn clear_face(&mut self) {
        self.face = None;
        self.pose = None;
    }
}

/// `round(frame_index * 1000 / fps)`.
pub fn frame_timestamp_ms(frame_index: u64, fps: f64) -> i64 {
    (frame_index as f64 * 1000.0 / fps).round() as i64
}

/// The six DOM event types recorded on the exam page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MouseEventKind {
    Blur,
    Focus,
    Copy,
    Paste,
    Mousemove,
    Mousewheel,
}

impl MouseEventKind {
    pub const ALL: [MouseEventKind; 6] = [
        MouseEventKind::Blur,
        MouseEventKind::Focus,
        MouseEventKind::Copy,
        MouseEventKind::Paste,
        MouseEventKind::Mousemove,
        MouseEventKind::Mousewheel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MouseEventKind::Blur => "blur",
            MouseEventKind::Focus => "focus",
            MouseEventKind::Copy => "copy",
            MouseEventKind::Paste => "paste",
            MouseEventKind::Mousemove => "mousemove",
            MouseEventKind::Mousewheel => "mousewheel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether records of this kind carry page coordinates.
    pub fn is_positioned(self) -> bool {
        !matches!(self, MouseEventKind::Blur | MouseEventKind::Focus)
    }

    pub fn is_page_switch(self) -> bool {
        matches!(self, MouseEventKind::Blur | MouseEventKind::Focus)
    }

    pub fn is_clipboard(self) -> bool {
        matches!(self, MouseEventKind::Copy | MouseEventKind::Paste)
    }
}

impl std::fmt::Display for MouseEventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MouseEvent {
    pub timestamp_ms: i64,
    pub kind: MouseEventKind,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

impl MouseEvent {
    pub fn new(
        timestamp_ms: i64,
        kind: MouseEventKind,
        x: Option<f64>,
        y: Option<f64>,
    ) -> Result<Self, ModelError> {
        let event = Self { timestamp_ms, kind, x, y };
        event.validate()?;
        Ok(event)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match (self.kind.is_positioned(), self.x, self.y) {
            (true, Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(()),
            (true, _, _) => Err(ModelError::InvalidMouseEvent(format!(
                "{} at {} ms requires finite x and y",
                self.kind, self.timestamp_ms
            ))),
            (false, None, None) => Ok(()),
            (false, _, _) => Err(ModelError::InvalidMouseEvent(format!(
                "{} at {} ms must not carry coordinates",
                self.kind, self.timestamp_ms
            ))),
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.x.zip(self.y)
    }
}

/// The interval `[start_ms, end_ms)` a student spent on one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSegment {
    pub question_id: String,
    pub start_ms: i64,
    pub end_ms: i64,
    pub correct: bool,
}

impl QuestionSegment {
    pub fn contains(&self, timestamp_ms: i64) -> bool {
        self.start_ms <= timestamp_ms && timestamp_ms < self.end_ms
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }
}

/// Finds the segment containing `timestamp_ms`. Segments must be sorted and
/// non-overlapping.
pub fn segment_at(segments: &[QuestionSegment], timestamp_ms: i64) -> Option<&QuestionSegment> {
    let idx = segments.partition_point(|s| s.start_ms <= timestamp_ms);
    idx.checked_sub(1).map(|i| &segments[i]).filter(|s| s.contains(timestamp_ms))
}

pub fn validate_segments(segments: &[QuestionSegment]) -> Result<(), ModelError> {
    for s in segments {
        if s.start_ms >= s.end_ms {
            return Err(ModelError::InvalidSegment(format!(
                "{}: start {} not before end {}",
                s.question_id, s.start_ms, s.end_ms
            )));
        }
    }
    for pair in segments.windows(2) {
        if pair[0].end_ms > pair[1].start_ms {
            return Err(ModelError::InvalidSegment(format!(
                "{} overlaps or precedes {}",
                pair[1].question_id, pair[0].question_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { width: 640, height: 480 }
    }
}

pub const DEFAULT_FPS: f64 = 30.0;

/// A student's complete exam session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub student_id: String,
    pub exam_id: String,
    pub fps: f64,
    pub resolution: Resolution,
    pub observations: Vec<FrameObservation>,
    pub mouse_events: Vec<MouseEvent>,
    pub segments: Vec<QuestionSegment>,
    pub score_fraction: f64,
    pub duration_ms: i64,
    pub time_limit_ms: i64,
    /// Video asset path, served as-is to the console.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ModelError::InvalidSession(format!("fps {} must be positive", self.fps)));
        }
        if self.resolution.width == 0 || self.resolution.height == 0 {
            return Err(ModelError::InvalidSession("resolution must be non-zero".into()));
        }
        if !(0.0..=1.0).contains(&self.score_fraction) {
            return Err(ModelError::InvalidSession(format!(
                "score_fraction {} outside [0, 1]",
                self.score_fraction
            )));
        }
        if self.duration_ms < 0 || self.duration_ms > self.time_limit_ms {
            return Err(ModelError::InvalidSession(format!(
                "duration {} ms exceeds time limit {} ms",
                self.duration_ms, self.time_limit_ms
            )));
        }
        for pair in self.observations.windows(2) {
            if pair[0].frame_index >= pair[1].frame_index {
                return Err(ModelError::InvalidSession(format!(
                    "frame index {} not strictly increasing",
                    pair[1].frame_index
                )));
            }
        }
        for obs in &self.observations {
            if obs.pose.is_some() && obs.face.is_none() {
                return Err(ModelError::PoseWithoutFace(obs.frame_index));
            }
            if let Some(face) = &obs.face {
                if !face.bbox.fits_within(self.resolution) {
                    return Err(ModelError::InvalidBoundingBox(format!(
                        "frame {} box outside {}x{}",
                        obs.frame_index, self.resolution.width, self.resolution.height
                    )));
                }
            }
        }
        for pair in self.mouse_events.windows(2) {
            if pair[0].timestamp_ms > pair[1].timestamp_ms {
                return Err(ModelError::InvalidSession(format!(
                    "mouse event at {} ms out of order",
                    pair[1].timestamp_ms
                )));
            }
        }
        for event in &self.mouse_events {
            event.validate()?;
        }
        validate_segments(&self.segments)
    }

    pub fn segment(&self, question_id: &str) -> Option<&QuestionSegment> {
        self.segments.iter().find(|s| s.question_id == question_id)
    }

    pub fn time_fraction(&self) -> f64 {
        if self.time_limit_ms <= 0 {
            return 0.0;
        }
        self.duration_ms as f64 / self.time_limit_ms as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    FaceDisappearance,
    AbnormalHeadPose,
    CopyPaste,
    BlurFocus,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::FaceDisappearance,
        CaseKind::AbnormalHeadPose,
        CaseKind::CopyPaste,
        CaseKind::BlurFocus,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseAxis {
    Pitch,
    Yaw,
    Both,
}

/// Kind-specific payload of a suspected case. The serde tag doubles as the
/// case kind on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseDetail {
    FaceDisappearance { frame_index: u64 },
    AbnormalHeadPose { frame_index: u64, axis: PoseAxis, z: f64 },
    CopyPaste { event: MouseEventKind, off_page_context: bool },
    BlurFocus { event: MouseEventKind },
}

impl CaseDetail {
    pub fn kind(&self) -> CaseKind {
        match self {
            CaseDetail::FaceDisappearance { .. } => CaseKind::FaceDisappearance,
            CaseDetail::AbnormalHeadPose { .. } => CaseKind::AbnormalHeadPose,
            CaseDetail::CopyPaste { .. } => CaseKind::CopyPaste,
            CaseDetail::BlurFocus { .. } => CaseKind::BlurFocus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspectedCase {
    pub timestamp_ms: i64,
    pub question_id: Option<String>,
    #[serde(flatten)]
    pub detail: CaseDetail,
}

impl SuspectedCase {
    /// Builds a case attributed to whichever segment contains `timestamp_ms`.
    pub fn attributed(timestamp_ms: i64, detail: CaseDetail, segments: &[QuestionSegment]) -> Self {
        Self {
            timestamp_ms,
            question_id: segment_at(segments, timestamp_ms).map(|s| s.question_id.clone()),
            detail,
        }
    }

    pub fn kind(&self) -> CaseKind {
        self.detail.kind()
    }
}

/// Occurrence counts of the four suspected types.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub n_f: u64,
    pub n_h: u64,
    pub n_c: u64,
    pub n_b: u64,
}

impl TypeCounts {
    pub fn get(&self, kind: CaseKind) -> u64 {
        match kind {
            CaseKind::FaceDisappearance => self.n_f,
            CaseKind::AbnormalHeadPose => self.n_h,
            CaseKind::CopyPaste => self.n_c,
            CaseKind::BlurFocus => self.n_b,
        }
    }

    pub fn increment(&mut self, kind: CaseKind) {
        match kind {
            CaseKind::FaceDisappearance => self.n_f += 1,
            CaseKind::AbnormalHeadPose => self.n_h += 1,
            CaseKind::CopyPaste => self.n_c += 1,
            CaseKind::BlurFocus => self.n_b += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.n_f + self.n_h + self.n_c + self.n_b
    }
}

impl std::ops::Add for TypeCounts {
    type Output = TypeCounts;

    fn add(self, rhs: TypeCounts) -> TypeCounts {
        TypeCounts {
            n_f: self.n_f + rhs.n_f,
            n_h: self.n_h + rhs.n_h,
            n_c: self.n_c + rhs.n_c,
            n_b: self.n_b + rhs.n_b,
        }
    }
}

impl std::iter::Sum for TypeCounts {
    fn sum<I: Iterator<Item = TypeCounts>>(iter: I) -> Self {
        iter.fold(TypeCounts::default(), |a, b| a + b)
    }
}

/// Per-type weights of the overall risk sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub w_f: f64,
    pub w_h: f64,
    pub w_c: f64,
    pub w_b: f64,
}

impl Default for RiskWeights {
    fn default() -> Self {
        Self { w_f: 1.0, w_h: 1.0, w_c: 1.0, w_b: 1.0 }
    }
}

impl RiskWeights {
    pub fn new(w_f: f64, w_h: f64, w_c: f64, w_b: f64) -> Result<Self, ModelError> {
        let weights = Self { w_f, w_h, w_c, w_b };
        weights.validate()?;
        Ok(weights)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w_f, self.w_h, self.w_c, self.w_b]
    }

    pub fn get(&self, kind: CaseKind) -> f64 {
        match kind {
            CaseKind::FaceDisappearance => self.w_f,
            CaseKind::AbnormalHeadPose => self.w_h,
            CaseKind::CopyPaste => self.w_c,
            CaseKind::BlurFocus => self.w_b,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w_f: self.w_f * factor,
            w_h: self.w_h * factor,
            w_c: self.w_c * factor,
            w_b: self.w_b * factor,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let w = self.as_array();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "weights must be finite and non-negative, got {w:?}"
            )));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(ModelError::InvalidConfig("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Tunable detection and scoring parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub z_threshold: f64,
    pub confidence_floor: f64,
    pub sample_stride: u32,
    pub context_window_ms: i64,
    pub weights: RiskWeights,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            z_threshold: 3.0,
            confidence_floor: 0.95,
            sample_stride: 5,
            context_window_ms: 30_000,
            weights: RiskWeights::default(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.z_threshold.is_finite() && self.z_threshold > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "z_threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(ModelError::InvalidConfig(format!(
                "confidence_floor must lie in [0, 1], got {}",
                self.confidence_floor
            )));
        }
        if self.sample_stride < 1 {
            return Err(ModelError::InvalidConfig("sample_stride must be at least 1".into()));
        }
        if self.context_window_ms < 1 {
            return Err(ModelError::InvalidConfig(format!(
                "context_window_ms must be positive, got {}",
                self.context_window_ms
            )));
        }
        self.weights.validate()
    }

    /// Applies a patch, returning the merged config only if it validates.
    pub fn patched(&self, patch: &ConfigPatch) -> Result<Self, ModelError> {
        let mut next = *self;
        if let Some(v) = patch.z_threshold {
            next.z_threshold = v;
        }
        if let Some(v) = patch.confidence_floor {
            next.confidence_floor = v;
        }
        if let Some(v) = patch.sample_stride {
            next.sample_stride = v;
        }
        if let Some(v) = patch.context_window_ms {
            next.context_window_ms = v;
        }
        if let Some(v) = patch.weights {
            next.weights = v;
        }
        next.validate()?;
        Ok(next)
    }
}

/// Partial update of [`DetectionConfig`]; field names mirror the config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub z_threshold: Option<f64>,
    pub confidence_floor: Option<f64>,
    pub sample_stride: Option<u32>,
    pub context_window_ms: Option<i64>,
    pub weights: Option<RiskWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseStats {
    pub mean_pitch: f64,
    pub mean_yaw: f64,
    pub sd_pitch: f64,
    pub sd_yaw: f64,
}

/// The four per-type values after cross-student min-max normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCounts {
    pub f: f64,
    pub h: f64,
    pub c: f64,
    pub b: f64,
}

impl NormalizedCounts {
    pub fn new(f: f64, h: f64, c: f64, b: f64) -> Self {
        Self { f, h, c, b }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.f, self.h, self.c, self.b]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { f: v[0], h: v[1], c: v[2], b: v[3] }
    }

    pub fn get(&self, kind: CaseKind) -> f64 {
        match kind {
            CaseKind::FaceDisappearance => self.f,
            CaseKind::AbnormalHeadPose => self.h,
            CaseKind::CopyPaste => self.c,
            CaseKind::BlurFocus => self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRiskProfile {
    pub student_id: String,
    pub question_id: String,
    pub raw: TypeCounts,
    pub normalized: NormalizedCounts,
    pub risk: f64,
    pub time_spent_ms: i64,
    pub correct: bool,
}

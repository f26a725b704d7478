//! Rule-based suspected-case detection.
//!
//! Head movements: each student's pitch and yaw series is min-max normalized
//! to [-1, 1], then every sampled frame is z-scored against that student's own
//! mean and population standard deviation. A frame is an abnormal head pose
//! when either |z| exceeds the threshold. Sampled frames without a face are
//! face disappearances.
//!
//! Mouse events: copy/paste and blur/focus are counted in pairs. A copy or
//! paste is flagged as having off-page context when any blur or focus falls
//! within `context_window_ms` of it on either side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::ingest::Exam;
use crate::model::{
    CaseDetail, DetectionConfig, PoseAxis, PoseStats, QuestionSegment, SessionRecord,
    SuspectedCase, TypeCounts, segment_at,
};
use crate::par::{self, ExecMode};

/// Signal carried by a [`NormalizedSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    Pitch,
    Yaw,
    XMin,
    YMin,
    XMax,
    YMax,
    MouseX,
    MouseY,
}

/// A per-student signal mapped to [-1, 1], with its sample timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub source: SeriesSource,
    pub timestamps_ms: Vec<i64>,
    pub values: Vec<f64>,
}

impl NormalizedSeries {
    pub fn empty(source: SeriesSource) -> Self {
        Self { source, timestamps_ms: Vec::new(), values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values whose timestamps fall inside `segment`.
    pub fn within(&self, segment: &QuestionSegment) -> impl Iterator<Item = f64> + '_ {
        let lo = self.timestamps_ms.partition_point(|&t| t < segment.start_ms);
        let hi = self.timestamps_ms.partition_point(|&t| t < segment.end_ms);
        self.values[lo..hi].iter().copied()
    }
}

/// Maps each value to `2 (v - min) / (max - min) - 1`. A constant series maps
/// to all zeros.
pub fn normalize_signed(raw: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if raw.is_empty() {
        return Err(AnalysisError::EmptyInput("normalize_signed"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidArgument("non-finite value".into()));
    }
    let (min, max) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|&v| 2.0 * (v - min) / range - 1.0).collect())
}

fn mean_and_population_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Arithmetic means and population standard deviations of the two axes.
pub fn pose_stats(pitch: &[f64], yaw: &[f64]) -> Result<PoseStats, AnalysisError> {
    if pitch.is_empty() || yaw.is_empty() {
        return Err(AnalysisError::EmptyInput("pose_stats"));
    }
    let (mean_pitch, sd_pitch) = mean_and_population_sd(pitch);
    let (mean_yaw, sd_yaw) = mean_and_population_sd(yaw);
    Ok(PoseStats { mean_pitch, mean_yaw, sd_pitch, sd_yaw })
}

fn z_score(value: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        (value - mean) / sd
    }
}

/// `(z_pitch, z_yaw)` of a normalized pose. A zero deviation yields zero.
pub fn z_scores(pitch: f64, yaw: f64, stats: &PoseStats) -> (f64, f64) {
    (z_score(pitch, stats.mean_pitch, stats.sd_pitch), z_score(yaw, stats.mean_yaw, stats.sd_yaw))
}

/// Normalized pitch and yaw over the sampled frames that carry a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSeries {
    pub frame_indices: Vec<u64>,
    pub timestamps_ms: Vec<i64>,
    pub pitch: Vec<f64>,
    pub yaw: Vec<f64>,
}

pub fn pose_series(session: &SessionRecord) -> Option<PoseSeries> {
    let posed: Vec<_> = session
        .observations
        .iter()
        .filter_map(|o| o.pose.map(|p| (o.frame_index, o.timestamp_ms, p)))
        .collect();
    if posed.is_empty() {
        return None;
    }
    let raw_pitch: Vec<f64> = posed.iter().map(|(_, _, p)| p.pitch).collect();
    let raw_yaw: Vec<f64> = posed.iter().map(|(_, _, p)| p.yaw).collect();
    Some(PoseSeries {
        frame_indices: posed.iter().map(|(i, _, _)| *i).collect(),
        timestamps_ms: posed.iter().map(|(_, t, _)| *t).collect(),
        pitch: normalize_signed(&raw_pitch).ok()?,
        yaw: normalize_signed(&raw_yaw).ok()?,
    })
}

pub fn session_pose_stats(session: &SessionRecord) -> Option<PoseStats> {
    pose_series(session).and_then(|s| pose_stats(&s.pitch, &s.yaw).ok())
}

/// One case per sampled frame whose |z| on pitch or yaw exceeds the
/// configured threshold.
pub fn detect_abnormal_poses(session: &SessionRecord, config: &DetectionConfig) -> Vec<SuspectedCase> {
    let Some(series) = pose_series(session) else {
        return Vec::new();
    };
    let Ok(stats) = pose_stats(&series.pitch, &series.yaw) else {
        return Vec::new();
    };
    let threshold = config.z_threshold;
    let mut cases = Vec::new();
    for i in 0..series.pitch.len() {
        let (zp, zy) = z_scores(series.pitch[i], series.yaw[i], &stats);
        let axis = match (zp.abs() > threshold, zy.abs() > threshold) {
            (true, true) => PoseAxis::Both,
            (true, false) => PoseAxis::Pitch,
            (false, true) => PoseAxis::Yaw,
            (false, false) => continue,
        };
        let z = if zp.abs() >= zy.abs() { zp } else { zy };
        cases.push(SuspectedCase::attributed(
            series.timestamps_ms[i],
            CaseDetail::AbnormalHeadPose { frame_index: series.frame_indices[i], axis, z },
            &session.segments,
        ));
    }
    cases
}

/// One case per sampled frame without a face.
pub fn detect_face_disappearance(session: &SessionRecord) -> Vec<SuspectedCase> {
    session
        .observations
        .iter()
        .filter(|o| o.face.is_none())
        .map(|o| {
            SuspectedCase::attributed(
                o.timestamp_ms,
                CaseDetail::FaceDisappearance { frame_index: o.frame_index },
                &session.segments,
            )
        })
        .collect()
}

/// Blur/focus and copy/paste cases, with off-page context verification.
pub fn classify_mouse_events(session: &SessionRecord, config: &DetectionConfig) -> Vec<SuspectedCase> {
    let switches: Vec<i64> = session
        .mouse_events
        .iter()
        .filter(|e| e.kind.is_page_switch())
        .map(|e| e.timestamp_ms)
        .collect();
    let window = config.context_window_ms;
    let near_switch = |t: i64| {
        let i = switches.partition_point(|&s| s < t - window);
        switches.get(i).is_some_and(|&s| s <= t + window)
    };

    session
        .mouse_events
        .iter()
        .filter_map(|e| {
            let detail = if e.kind.is_clipboard() {
                CaseDetail::CopyPaste { event: e.kind, off_page_context: near_switch(e.timestamp_ms) }
            } else if e.kind.is_page_switch() {
                CaseDetail::BlurFocus { event: e.kind }
            } else {
                return None;
            };
            Some(SuspectedCase::attributed(e.timestamp_ms, detail, &session.segments))
        })
        .collect()
}

/// Counts cases per question by segment lookup on each case's timestamp.
/// Every segment's question appears in the output, zero-filled if needed.
pub fn per_question_counts(
    cases: &[SuspectedCase],
    segments: &[QuestionSegment],
) -> BTreeMap<String, TypeCounts> {
    let mut out: BTreeMap<String, TypeCounts> =
        segments.iter().map(|s| (s.question_id.clone(), TypeCounts::default())).collect();
    for case in cases {
        if let Some(seg) = segment_at(segments, case.timestamp_ms) {
            out.entry(seg.question_id.clone()).or_default().increment(case.kind());
        }
    }
    out
}

pub fn count_cases(cases: &[SuspectedCase]) -> TypeCounts {
    let mut counts = TypeCounts::default();
    for case in cases {
        counts.increment(case.kind());
    }
    counts
}

/// Everything the engine derives from one session under one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDetection {
    pub student_id: String,
    /// Ordered by timestamp, then by kind.
    pub cases: Vec<SuspectedCase>,
    pub totals: TypeCounts,
    pub per_question: BTreeMap<String, TypeCounts>,
    /// Cases outside every segment.
    pub unattributed: TypeCounts,
    pub pose_stats: Option<PoseStats>,
}

impl SessionDetection {
    pub fn question_counts(&self, question_id: &str) -> TypeCounts {
        self.per_question.get(question_id).copied().unwrap_or_default()
    }

    pub fn cases_in<'a>(&'a self, question_id: &'a str) -> impl Iterator<Item = &'a SuspectedCase> + 'a {
        self.cases.iter().filter(move |c| c.question_id.as_deref() == Some(question_id))
    }
}

pub fn detect_session(session: &SessionRecord, config: &DetectionConfig) -> SessionDetection {
    let mut cases = detect_face_disappearance(session);
    cases.extend(detect_abnormal_poses(session, config));
    cases.extend(classify_mouse_events(session, config));
    cases.sort_by_key(|c| (c.timestamp_ms, c.kind()));

    let totals = count_cases(&cases);
    let per_question = per_question_counts(&cases, &session.segments);
    let unattributed =
        count_cases(&cases.iter().filter(|c| c.question_id.is_none()).cloned().collect::<Vec<_>>());
    SessionDetection {
        student_id: session.student_id.clone(),
        cases,
        totals,
        per_question,
        unattributed,
        pose_stats: session_pose_stats(session),
    }
}

/// Runs detection over every session. Output order matches `exam.sessions`.
pub fn detect_exam(exam: &Exam, config: &DetectionConfig, mode: ExecMode) -> Vec<SessionDetection> {
    par::map_collect(mode, &exam.sessions, |s| detect_session(s, config))
}

/// The normalized signal `source` of one session.
pub fn normalized_series(session: &SessionRecord, source: SeriesSource) -> NormalizedSeries {
    let (timestamps_ms, raw): (Vec<i64>, Vec<f64>) = match source {
        SeriesSource::Pitch | SeriesSource::Yaw => session
            .observations
            .iter()
            .filter_map(|o| {
                o.pose.map(|p| (o.timestamp_ms, if source == SeriesSource::Pitch { p.pitch } else { p.yaw }))
            })
            .unzip(),
        SeriesSource::XMin | SeriesSource::YMin | SeriesSource::XMax | SeriesSource::YMax => session
            .observations
            .iter()
            .filter_map(|o| {
                o.face.map(|f| {
                    let b = f.bbox;
                    let v = match source {
                        SeriesSource::XMin => b.x_min,
                        SeriesSource::YMin => b.y_min,
                        SeriesSource::XMax => b.x_max,
                        _ => b.y_max,
                    };
                    (o.timestamp_ms, v)
                })
            })
            .unzip(),
        SeriesSource::MouseX | SeriesSource::MouseY => session
            .mouse_events
            .iter()
            .filter_map(|e| {
                e.position().map(|(x, y)| (e.timestamp_ms, if source == SeriesSource::MouseX { x } else { y }))
            })
            .unzip(),
    };
    match normalize_signed(&raw) {
        Ok(values) => NormalizedSeries { source, timestamps_ms, values },
        Err(_) => NormalizedSeries::empty(source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BoundingBox, Face, FrameObservation, HeadPose, MouseEvent, MouseEventKind, Resolution,
    };

    const EPS: f64 = 1e-12;

    fn seg(id: &str, start: i64, end: i64) -> QuestionSegment {
        QuestionSegment { question_id: id.into(), start_ms: start, end_ms: end, correct: true }
    }

    fn session_with(observations: Vec<FrameObservation>, mouse_events: Vec<MouseEvent>) -> SessionRecord {
        SessionRecord {
            student_id: "s1".into(),
            exam_id: "e".into(),
            fps: 30.0,
            resolution: Resolution::default(),
            observations,
            mouse_events,
            segments: vec![seg("q1", 0, 100_000)],
            score_fraction: 0.5,
            duration_ms: 100_000,
            time_limit_ms: 200_000,
            video: None,
        }
    }

    fn posed(index: u64, pitch: f64, yaw: f64) -> FrameObservation {
        let face = Face::new(BoundingBox::new(10.0, 10.0, 50.0, 60.0).unwrap(), 0.99).unwrap();
        FrameObservation::new(index, 30.0, Some(face), Some(HeadPose::new(pitch, yaw, 0.0).unwrap()))
            .unwrap()
    }

    fn ev(t: i64, kind: MouseEventKind) -> MouseEvent {
        if kind.is_positioned() {
            MouseEvent::new(t, kind, Some(1.0), Some(1.0)).unwrap()
        } else {
            MouseEvent::new(t, kind, None, None).unwrap()
        }
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < EPS)
    }

    #[test]
    fn signed_normalization_examples() {
        assert!(close(&normalize_signed(&[10.0, 20.0, 30.0]).unwrap(), &[-1.0, 0.0, 1.0]));
        assert_eq!(normalize_signed(&[7.0, 7.0, 7.0]).unwrap(), vec![0.0; 3]);
        // 2 * (1 - 0) / 3 - 1
        assert!(close(&normalize_signed(&[0.0, 1.0, 3.0]).unwrap(), &[-1.0, -1.0 / 3.0, 1.0]));
        assert!(normalize_signed(&[]).is_err());
    }

    #[test]
    fn pose_stats_examples() {
        let s = pose_stats(&[-0.5, 0.0, 0.5], &[0.3, 0.3]).unwrap();
        assert!(s.mean_pitch.abs() < EPS);
        assert!((s.sd_pitch - (1.0f64 / 6.0).sqrt()).abs() < EPS);
        assert!((s.mean_yaw - 0.3).abs() < EPS);
        assert_eq!(s.sd_yaw, 0.0);
        let s = pose_stats(&[1.0, -1.0], &[0.0]).unwrap();
        assert_eq!((s.mean_pitch, s.sd_pitch), (0.0, 1.0));
        assert!(pose_stats(&[], &[1.0]).is_err());
    }

    #[test]
    fn z_score_examples() {
        let stats = PoseStats { mean_pitch: 0.0, mean_yaw: 0.2, sd_pitch: (1.0f64 / 6.0).sqrt(), sd_yaw: 0.0 };
        let (zp, zy) = z_scores(0.5, 0.9, &stats);
        assert!((zp - 1.224744871391589).abs() < 1e-9);
        assert_eq!(zy, 0.0);
        assert_eq!(z_scores(0.0, 0.2, &stats), (0.0, 0.0));
    }

    #[test]
    fn constant_pose_never_flags() {
        let obs = (0..50).map(|i| posed(i * 5, 4.0, -2.0)).collect();
        let s = session_with(obs, vec![]);
        let cfg = DetectionConfig { z_threshold: 0.01, ..DetectionConfig::default() };
        assert!(detect_abnormal_poses(&s, &cfg).is_empty());
    }

    #[test]
    fn single_outlier_flagged_with_axis() {
        let mut obs: Vec<_> = (0..200).map(|i| posed(i, if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        obs[100] = posed(100, 1.0, 40.0);
        let s = session_with(obs, vec![]);
        let cases = detect_abnormal_poses(&s, &DetectionConfig::default());
        assert_eq!(cases.len(), 1);
        match cases[0].detail {
            CaseDetail::AbnormalHeadPose { frame_index, axis, z } => {
                assert_eq!(frame_index, 100);
                assert_eq!(axis, PoseAxis::Yaw);
                assert!(z > 3.0);
            }
            ref other => panic!("unexpected {other:?}"),
        }
        assert_eq!(cases[0].question_id.as_deref(), Some("q1"));
    }

    #[test]
    fn face_disappearance_counts_missing_frames() {
        let mut obs: Vec<_> = (0..10).map(|i| posed(i * 5, 0.0, 0.0)).collect();
        obs[3] = FrameObservation::new(15, 30.0, None, None).unwrap();
        obs[4] = FrameObservation::new(20, 30.0, None, None).unwrap();
        let s = session_with(obs, vec![]);
        let cases = detect_face_disappearance(&s);
        let ts: Vec<i64> = cases.iter().map(|c| c.timestamp_ms).collect();
        assert_eq!(ts, vec![500, 667]);
        let all_faces = session_with((0..10).map(|i| posed(i, 0.0, 0.0)).collect(), vec![]);
        assert!(detect_face_disappearance(&all_faces).is_empty());
    }

    #[test]
    fn off_page_context_window() {
        use MouseEventKind::*;
        let s = session_with(vec![], vec![ev(5000, Copy), ev(7000, Blur), ev(61_000, Focus), ev(61_500, Paste)]);
        let cases = classify_mouse_events(&s, &DetectionConfig::default());
        let flags: Vec<bool> = cases
            .iter()
            .filter_map(|c| match c.detail {
                CaseDetail::CopyPaste { off_page_context, .. } => Some(off_page_context),
                _ => None,
            })
            .collect();
        assert_eq!(flags, vec![true, true]);

        let s = session_with(vec![], vec![ev(5000, Copy), ev(6000, Mousemove), ev(8000, Paste)]);
        let cases = classify_mouse_events(&s, &DetectionConfig::default());
        assert_eq!(cases.len(), 2);
        assert!(cases
            .iter()
            .all(|c| matches!(c.detail, CaseDetail::CopyPaste { off_page_context: false, .. })));

        // window edges are inclusive
        let s = session_with(vec![], vec![ev(0, Copy), ev(30_000, Blur), ev(60_001, Paste)]);
        let cases = classify_mouse_events(&s, &DetectionConfig::default());
        assert!(matches!(cases[0].detail, CaseDetail::CopyPaste { off_page_context: true, .. }));
        assert!(matches!(cases[2].detail, CaseDetail::CopyPaste { off_page_context: false, .. }));
    }

    #[test]
    fn blur_and_focus_counted_together() {
        use MouseEventKind::*;
        let events = (0..6).map(|i| ev(i * 100, if i % 2 == 0 { Blur } else { Focus })).collect();
        let det = detect_session(&session_with(vec![], events), &DetectionConfig::default());
        assert_eq!(det.totals.n_b, 6);
        assert_eq!(det.totals.n_c, 0);
    }

    #[test]
    fn attribution_and_conservation() {
        let segs = vec![seg("q1", 1000, 2000), seg("q2", 2000, 3000)];
        let mk = |t| SuspectedCase::attributed(
            t,
            CaseDetail::AbnormalHeadPose { frame_index: 0, axis: PoseAxis::Pitch, z: 4.0 },
            &segs,
        );
        let cases = vec![mk(1000), mk(1500), mk(5000)];
        let per_q = per_question_counts(&cases, &segs);
        assert_eq!(per_q["q1"].n_h, 2);
        assert_eq!(per_q["q2"], TypeCounts::default());
        assert_eq!(count_cases(&cases).n_h, 3);
        assert!(per_question_counts(&[], &segs).values().all(|c| *c == TypeCounts::default()));
        assert_eq!(mk(2000).question_id.as_deref(), Some("q2"));
    }

    #[test]
    fn normalized_series_covers_mouse() {
        use MouseEventKind::*;
        let events = vec![
            MouseEvent::new(0, Mousemove, Some(0.0), Some(100.0)).unwrap(),
            ev(10, Blur),
            MouseEvent::new(20, Mousemove, Some(640.0), Some(300.0)).unwrap(),
        ];
        let s = session_with(vec![], events);
        let x = normalized_series(&s, SeriesSource::MouseX);
        assert_eq!(x.values, vec![-1.0, 1.0]);
        assert_eq!(x.timestamps_ms, vec![0, 20]);
        assert!(normalized_series(&s, SeriesSource::Pitch).is_empty());
    }
}

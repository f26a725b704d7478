//! Labeled synthetic exam sessions.
//!
//! Baseline head pose is Gaussian around a per-student mean. Planted behaviors
//! overwrite the baseline inside their interval and are listed in the ground
//! truth, so detection recall can be measured exactly. Every session draws
//! from its own ChaCha stream, which keeps output identical regardless of how
//! students are scheduled across threads.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::ingest::{self, ExamManifest, StudentEntry};
use crate::model::{
    frame_timestamp_ms, BoundingBox, CaseKind, Face, FrameObservation, HeadPose, MouseEvent,
    MouseEventKind, QuestionSegment, Resolution, SessionRecord,
};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheatKind {
    /// Looking down or aside at local material: pose excursion.
    LocalMaterialGlance,
    /// Leaving the exam page: blur ... focus.
    OffPageSearch,
    /// copy, blur, focus, paste.
    CopyPasteRoundtrip,
    /// Face absent from the camera.
    LeaveSeat,
}

/// One planted behavior. `onset_ms` is relative to the start of the target
/// question's segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCheat {
    pub kind: CheatKind,
    pub question_id: String,
    pub onset_ms: i64,
    pub duration_ms: i64,
    /// Pose offset in baseline standard deviations (glances only).
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
}

fn default_magnitude() -> f64 {
    5.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheatPlan {
    pub items: Vec<PlannedCheat>,
}

/// Plan file: student id to the behaviors planted for that student.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub students: BTreeMap<String, CheatPlan>,
}

/// Baseline behavior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineProfile {
    pub fps: f64,
    pub resolution: Resolution,
    /// Per-student pose mean is drawn uniformly from +-this range (degrees).
    pub pose_mean_spread: f64,
    /// Per-student pose standard deviation is drawn from this range.
    pub pose_sd_range: (f64, f64),
    pub roll_sd: f64,
    pub face_size: (f64, f64),
    pub face_jitter_px: f64,
    pub confidence_range: (f64, f64),
    /// Probability a baseline frame's detection falls below the usual floor.
    pub low_confidence_rate: f64,
    pub mouse_rate_hz: f64,
    pub mouse_step_px: f64,
    pub wheel_fraction: f64,
    /// Stride the ground truth labels frames against.
    pub sample_stride: u32,
}

impl Default for BaselineProfile {
    fn default() -> Self {
        Self {
            fps: 30.0,
            resolution: Resolution::default(),
            pose_mean_spread: 10.0,
            pose_sd_range: (2.0, 6.0),
            roll_sd: 3.0,
            face_size: (150.0, 190.0),
            face_jitter_px: 6.0,
            confidence_range: (0.96, 0.999),
            low_confidence_rate: 0.0,
            mouse_rate_hz: 10.0,
            mouse_step_px: 12.0,
            wheel_fraction: 0.05,
            sample_stride: 5,
        }
    }
}

impl BaselineProfile {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(m.to_owned()));
        if self.fps.is_nan() || self.fps <= 0.0 {
            return bad("fps must be positive");
        }
        if self.pose_sd_range.0 <= 0.0 || self.pose_sd_range.0 > self.pose_sd_range.1 {
            return bad("pose_sd_range must be positive and ordered");
        }
        if self.face_size.0 >= self.resolution.width as f64 || self.face_size.1 >= self.resolution.height as f64 {
            return bad("face does not fit the frame");
        }
        if !(0.0..=1.0).contains(&self.low_confidence_rate) || !(0.0..=1.0).contains(&self.wheel_fraction) {
            return bad("rates must lie in [0, 1]");
        }
        if self.mouse_rate_hz < 0.0 || self.sample_stride < 1 {
            return bad("mouse rate must be non-negative and stride positive");
        }
        Ok(())
    }
}

/// Identity and timing of one session to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLayout {
    pub student_id: String,
    pub exam_id: String,
    pub segments: Vec<QuestionSegment>,
    pub duration_ms: i64,
    pub time_limit_ms: i64,
    pub score_fraction: f64,
}

/// A planted case the engine is expected to recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCase {
    pub kind: CaseKind,
    pub timestamp_ms: i64,
    pub question_id: String,
    pub plan_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<MouseEventKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub student_id: String,
    pub planted: Vec<PlantedCase>,
}

impl GroundTruth {
    pub fn of_kind(&self, kind: CaseKind) -> impl Iterator<Item = &PlantedCase> {
        self.planted.iter().filter(move |p| p.kind == kind)
    }
}

/// A plan item resolved to absolute session time.
#[derive(Debug, Clone)]
struct ActivePlan {
    index: usize,
    kind: CheatKind,
    question_id: String,
    start: i64,
    end: i64,
    magnitude: f64,
}

fn resolve_plan(plan: &CheatPlan, segments: &[QuestionSegment]) -> Result<Vec<ActivePlan>, SynthError> {
    let mut out = Vec::with_capacity(plan.items.len());
    for (index, item) in plan.items.iter().enumerate() {
        let invalid = |message: String| SynthError::InvalidPlan { index, message };
        let seg = segments
            .iter()
            .find(|s| s.question_id == item.question_id)
            .ok_or_else(|| invalid(format!("no segment for question {:?}", item.question_id)))?;
        if item.onset_ms < 0 || item.duration_ms <= 0 {
            return Err(invalid("onset must be non-negative and duration positive".into()));
        }
        // the last planted event sits at `end`, which must stay inside [start, end)
        if item.onset_ms + item.duration_ms >= seg.duration_ms() {
            return Err(invalid(format!(
                "interval {}+{} ms exceeds segment {:?} of {} ms",
                item.onset_ms,
                item.duration_ms,
                item.question_id,
                seg.duration_ms()
            )));
        }
        if item.kind == CheatKind::CopyPasteRoundtrip && item.duration_ms < 4 {
            return Err(invalid("copy/paste roundtrip needs at least 4 ms".into()));
        }
        if item.kind == CheatKind::LocalMaterialGlance && !(item.magnitude.is_finite() && item.magnitude > 0.0) {
            return Err(invalid("glance magnitude must be positive".into()));
        }
        let start = seg.start_ms + item.onset_ms;
        out.push(ActivePlan {
            index,
            kind: item.kind,
            question_id: item.question_id.clone(),
            start,
            end: start + item.duration_ms,
            magnitude: item.magnitude,
        });
    }
    out.sort_by_key(|p| p.start);
    if let Some(w) = out.windows(2).find(|w| w[0].end >= w[1].start) {
        return Err(SynthError::InvalidPlan { index: w[1].index, message: "overlaps another plan item".into() });
    }
    Ok(out)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn active_at(plans: &[ActivePlan], t: i64) -> Option<&ActivePlan> {
    let i = plans.partition_point(|p| p.start <= t);
    i.checked_sub(1).map(|i| &plans[i]).filter(|p| t < p.end)
}

/// Generates one full-rate session and its ground truth.
pub fn generate_session(
    seed: u64,
    layout: &SessionLayout,
    profile: &BaselineProfile,
    plan: &CheatPlan,
) -> Result<(SessionRecord, GroundTruth), SynthError> {
    profile.validate()?;
    let plans = resolve_plan(plan, &layout.segments)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = GroundTruth { student_id: layout.student_id.clone(), planted: Vec::new() };

    let spread = profile.pose_mean_spread;
    let pitch_mean = rng.random_range(-spread..=spread);
    let yaw_mean = rng.random_range(-spread..=spread);
    let (sd_lo, sd_hi) = profile.pose_sd_range;
    let pitch_sd = rng.random_range(sd_lo..=sd_hi);
    let yaw_sd = rng.random_range(sd_lo..=sd_hi);
    let glance_axis: Vec<(bool, f64)> =
        plans.iter().map(|_| (rng.random_bool(0.5), if rng.random_bool(0.5) { 1.0 } else { -1.0 })).collect();

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (w, h) = (profile.resolution.width as f64, profile.resolution.height as f64);
    let (fw, fh) = profile.face_size;
    let cx0 = w / 2.0 + rng.random_range(-w / 10.0..=w / 10.0);
    let cy0 = h / 2.0 + rng.random_range(-h / 10.0..=h / 10.0);

    let n_frames = (layout.duration_ms as f64 * profile.fps / 1000.0).ceil() as u64;
    let stride = u64::from(profile.sample_stride);
    let mut observations = Vec::with_capacity(n_frames as usize);
    for i in 0..n_frames {
        let t = frame_timestamp_ms(i, profile.fps);
        let plan = active_at(&plans, t);
        let sampled = i % stride == 0;

        if let Some(p) = plan.filter(|p| p.kind == CheatKind::LeaveSeat) {
            if sampled {
                truth.planted.push(PlantedCase {
                    kind: CaseKind::FaceDisappearance,
                    timestamp_ms: t,
                    question_id: p.question_id.clone(),
                    plan_index: p.index,
                    frame_index: Some(i),
                    event: None,
                    magnitude: None,
                });
            }
            observations.push(FrameObservation { frame_index: i, timestamp_ms: t, face: None, pose: None });
            continue;
        }

        let mut pitch = pitch_mean + pitch_sd * std_normal.sample(&mut rng);
        let mut yaw = yaw_mean + yaw_sd * std_normal.sample(&mut rng);
        let roll = profile.roll_sd * std_normal.sample(&mut rng);
        let glance = plan.filter(|p| p.kind == CheatKind::LocalMaterialGlance);
        let confidence = if glance.is_none() && rng.random_bool(profile.low_confidence_rate) {
            rng.random_range(0.5..=0.95)
        } else {
            rng.random_range(profile.confidence_range.0..=profile.confidence_range.1)
        };
        if let Some(p) = glance {
            let pos = plans.iter().position(|q| q.index == p.index).unwrap_or(0);
            let (on_pitch, sign) = glance_axis[pos];
            let excursion = p.magnitude + 0.1 * std_normal.sample(&mut rng).abs();
            if on_pitch {
                pitch = pitch_mean + sign * excursion * pitch_sd;
            } else {
                yaw = yaw_mean + sign * excursion * yaw_sd;
            }
            if sampled {
                truth.planted.push(PlantedCase {
                    kind: CaseKind::AbnormalHeadPose,
                    timestamp_ms: t,
                    question_id: p.question_id.clone(),
                    plan_index: p.index,
                    frame_index: Some(i),
                    event: None,
                    magnitude: Some(p.magnitude),
                });
            }
        }

        let cx = (cx0 + profile.face_jitter_px * std_normal.sample(&mut rng)).clamp(fw / 2.0, w - fw / 2.0);
        let cy = (cy0 + profile.face_jitter_px * std_normal.sample(&mut rng)).clamp(fh / 2.0, h - fh / 2.0);
        let bbox = BoundingBox::new(
            round_to(cx - fw / 2.0, 0.1).max(0.0),
            round_to(cy - fh / 2.0, 0.1).max(0.0),
            round_to(cx + fw / 2.0, 0.1).min(w),
            round_to(cy + fh / 2.0, 0.1).min(h),
        )?;
        let face = Face::new(bbox, round_to(confidence, 1e-4))?;
        let pose = HeadPose::new(
            round_to(pitch.clamp(-180.0, 180.0), 1e-3),
            round_to(yaw.clamp(-180.0, 180.0), 1e-3),
            round_to(roll.clamp(-180.0, 180.0), 1e-3),
        )?;
        observations.push(FrameObservation { frame_index: i, timestamp_ms: t, face: Some(face), pose: Some(pose) });
    }

    let mouse_events = generate_mouse(&mut rng, layout, profile, &plans, &mut truth)?;
    truth.planted.sort_by_key(|p| (p.timestamp_ms, p.kind));

    let session = SessionRecord {
        student_id: layout.student_id.clone(),
        exam_id: layout.exam_id.clone(),
        fps: profile.fps,
        resolution: profile.resolution,
        observations,
        mouse_events,
        segments: layout.segments.clone(),
        score_fraction: layout.score_fraction,
        duration_ms: layout.duration_ms,
        time_limit_ms: layout.time_limit_ms,
        video: None,
    };
    session.validate()?;
    Ok((session, truth))
}

fn generate_mouse(
    rng: &mut ChaCha8Rng,
    layout: &SessionLayout,
    profile: &BaselineProfile,
    plans: &[ActivePlan],
    truth: &mut GroundTruth,
) -> Result<Vec<MouseEvent>, SynthError> {
    let (w, h) = (profile.resolution.width as f64, profile.resolution.height as f64);
    let step = Normal::new(0.0, profile.mouse_step_px.max(f64::MIN_POSITIVE)).expect("finite step");
    let mut x = rng.random_range(0.0..w);
    let mut y = rng.random_range(0.0..h);
    let mut events = Vec::new();

    // blur..focus windows during which the page receives no pointer events
    let off_page: Vec<(i64, i64)> = plans
        .iter()
        .filter_map(|p| match p.kind {
            CheatKind::OffPageSearch => Some((p.start, p.end)),
            CheatKind::CopyPasteRoundtrip => {
                let d = ((p.end - p.start) / 4).min(1000);
                Some((p.start + d, p.end - d))
            }
            _ => None,
        })
        .collect();

    if profile.mouse_rate_hz > 0.0 {
        let gap = Exp::new(profile.mouse_rate_hz / 1000.0).expect("positive rate");
        let mut t = gap.sample(rng);
        while (t as i64) < layout.duration_ms {
            let ts = t as i64;
            x = (x + step.sample(rng)).clamp(0.0, w - 1.0);
            y = (y + step.sample(rng)).clamp(0.0, h - 1.0);
            if !off_page.iter().any(|&(a, b)| a <= ts && ts <= b) {
                let kind = if rng.random_bool(profile.wheel_fraction) {
                    MouseEventKind::Mousewheel
                } else {
                    MouseEventKind::Mousemove
                };
                events.push(MouseEvent::new(ts, kind, Some(x.round()), Some(y.round()))?);
            }
            t += gap.sample(rng);
        }
    }

    for p in plans {
        let planted: Vec<(i64, MouseEventKind)> = match p.kind {
            CheatKind::OffPageSearch => vec![(p.start, MouseEventKind::Blur), (p.end, MouseEventKind::Focus)],
            CheatKind::CopyPasteRoundtrip => {
                let d = ((p.end - p.start) / 4).min(1000);
                vec![
                    (p.start, MouseEventKind::Copy),
                    (p.start + d, MouseEventKind::Blur),
                    (p.end - d, MouseEventKind::Focus),
                    (p.end, MouseEventKind::Paste),
                ]
            }
            _ => continue,
        };
        for (ts, kind) in planted {
            let pos = kind.is_positioned().then(|| (rng.random_range(0.0..w).round(), rng.random_range(0.0..h).round()));
            events.push(MouseEvent::new(ts, kind, pos.map(|p| p.0), pos.map(|p| p.1))?);
            truth.planted.push(PlantedCase {
                kind: if kind.is_clipboard() { CaseKind::CopyPaste } else { CaseKind::BlurFocus },
                timestamp_ms: ts,
                question_id: p.question_id.clone(),
                plan_index: p.index,
                frame_index: None,
                event: Some(kind),
                magnitude: None,
            });
        }
    }
    events.sort_by_key(|e| e.timestamp_ms);
    Ok(events)
}

/// Exam-wide generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExamSpec {
    pub exam_id: String,
    pub n_students: usize,
    pub n_questions: usize,
    pub min_duration_ms: i64,
    pub max_duration_ms: i64,
    pub time_limit_ms: i64,
    /// Idle time before the first question opens.
    pub lead_in_ms: i64,
}

impl Default for ExamSpec {
    fn default() -> Self {
        Self {
            exam_id: "mock-exam".into(),
            n_students: 24,
            n_questions: 14,
            min_duration_ms: 8 * 60_000,
            max_duration_ms: 20 * 60_000,
            time_limit_ms: 20 * 60_000,
            lead_in_ms: 5_000,
        }
    }
}

impl ExamSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(m.to_owned()));
        if self.n_students == 0 || self.n_questions == 0 {
            return bad("need at least one student and one question");
        }
        if self.min_duration_ms > self.max_duration_ms || self.max_duration_ms > self.time_limit_ms {
            return bad("durations must satisfy min <= max <= time limit");
        }
        if self.lead_in_ms < 0 || self.min_duration_ms - self.lead_in_ms < 1000 * self.n_questions as i64 {
            return bad("sessions too short for the question count");
        }
        Ok(())
    }

    pub fn student_id(&self, i: usize) -> String {
        let width = self.n_students.to_string().len().max(2);
        format!("s{:0width$}", i + 1)
    }

    pub fn question_ids(&self) -> Vec<String> {
        let width = self.n_questions.to_string().len().max(2);
        (1..=self.n_questions).map(|q| format!("q{q:0width$}")).collect()
    }
}

/// Independent RNG stream for student `index` under `seed`.
pub fn student_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Random session length, question segments, and score for one student.
pub fn random_layout(rng: &mut impl Rng, spec: &ExamSpec, student_id: String) -> SessionLayout {
    let duration = rng.random_range(spec.min_duration_ms..=spec.max_duration_ms);
    let weights: Vec<f64> = (0..spec.n_questions).map(|_| rng.random_range(0.5..1.5)).collect();
    let total_w: f64 = weights.iter().sum();
    let span = (duration - spec.lead_in_ms) as f64;
    let mut segments = Vec::with_capacity(spec.n_questions);
    let mut start = spec.lead_in_ms;
    let mut acc = 0.0;
    for (q, (id, wq)) in spec.question_ids().into_iter().zip(&weights).enumerate() {
        acc += wq;
        let end = if q + 1 == spec.n_questions {
            duration
        } else {
            spec.lead_in_ms + (span * acc / total_w).round() as i64
        };
        segments.push(QuestionSegment { question_id: id, start_ms: start, end_ms: end, correct: rng.random_bool(0.7) });
        start = end;
    }
    let score_fraction =
        segments.iter().filter(|s| s.correct).count() as f64 / segments.len() as f64;
    SessionLayout {
        student_id,
        exam_id: spec.exam_id.clone(),
        segments,
        duration_ms: duration,
        time_limit_ms: spec.time_limit_ms,
        score_fraction,
    }
}

/// A mixed plan of up to `max_items` behaviors on distinct questions.
pub fn random_plan(rng: &mut impl Rng, segments: &[QuestionSegment], max_items: usize) -> CheatPlan {
    let mut order: Vec<&QuestionSegment> = segments.iter().collect();
    order.shuffle(rng);
    let n = rng.random_range(1..=max_items.max(1));
    let kinds = [
        CheatKind::LocalMaterialGlance,
        CheatKind::OffPageSearch,
        CheatKind::CopyPasteRoundtrip,
        CheatKind::LeaveSeat,
    ];
    let mut items = Vec::new();
    for seg in order.into_iter().take(n) {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let (lo, hi) = match kind {
            CheatKind::LocalMaterialGlance => (1_000, 4_000),
            CheatKind::LeaveSeat => (3_000, 15_000),
            CheatKind::OffPageSearch | CheatKind::CopyPasteRoundtrip => (10_000, 45_000),
        };
        let room = seg.duration_ms() - 1;
        if room <= lo {
            continue;
        }
        let duration = rng.random_range(lo..=hi.min(room - 1).max(lo));
        let onset = rng.random_range(0..(room - duration).max(1));
        items.push(PlannedCheat {
            kind,
            question_id: seg.question_id.clone(),
            onset_ms: onset,
            duration_ms: duration,
            magnitude: rng.random_range(5.0..8.0),
        });
    }
    CheatPlan { items }
}

/// Output of [`generate_exam`].
#[derive(Debug, Clone)]
pub struct GeneratedExam {
    pub manifest_path: PathBuf,
    pub manifest: ExamManifest,
    pub truths: Vec<GroundTruth>,
}

/// Generates every student, writes the wire files and manifest under
/// `out_dir`, and returns the manifest and ground truth. Students listed in
/// `plans` get those behaviors planted; the first `random_cheaters` students
/// without an explicit plan get a random one.
pub fn generate_exam(
    seed: u64,
    spec: &ExamSpec,
    profile: &BaselineProfile,
    plans: &PlanFile,
    random_cheaters: usize,
    out_dir: &Path,
    mode: ExecMode,
) -> Result<GeneratedExam, SynthError> {
    spec.validate()?;
    profile.validate()?;
    let students_dir = out_dir.join("students");
    fs::create_dir_all(&students_dir).map_err(|source| SynthError::Io { path: students_dir.clone(), source })?;

    let results = par::map_range(mode, spec.n_students, |i| -> Result<(StudentEntry, GroundTruth), SynthError> {
        let student_id = spec.student_id(i);
        let mut rng = student_rng(seed, i);
        let layout = random_layout(&mut rng, spec, student_id.clone());
        let plan = match plans.students.get(&student_id) {
            Some(p) => p.clone(),
            None if i < random_cheaters => random_plan(&mut rng, &layout.segments, 3),
            None => CheatPlan::default(),
        };
        let session_seed: u64 = rng.random();
        let (session, truth) = generate_session(session_seed, &layout, profile, &plan)?;

        let obs_rel = PathBuf::from("students").join(format!("{student_id}.frames.jsonl"));
        let mouse_rel = PathBuf::from("students").join(format!("{student_id}.mouse.jsonl"));
        write_file(&out_dir.join(&obs_rel), |w| ingest::write_frame_observations(w, &session.observations))?;
        write_file(&out_dir.join(&mouse_rel), |w| ingest::write_mouse_events(w, &session.mouse_events))?;
        Ok((
            StudentEntry {
                student_id,
                observations: obs_rel,
                mouse_events: mouse_rel,
                video: None,
                segments: session.segments,
                score_fraction: session.score_fraction,
                duration_ms: session.duration_ms,
                fps: session.fps,
                resolution: session.resolution,
            },
            truth,
        ))
    });
    let (students, truths): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();

    for id in plans.students.keys() {
        if !students.iter().any(|s| &s.student_id == id) {
            return Err(SynthError::InvalidPlan { index: 0, message: format!("plan names unknown student {id:?}") });
        }
    }

    let manifest = ExamManifest {
        exam_id: spec.exam_id.clone(),
        time_limit_ms: spec.time_limit_ms,
        questions: spec.question_ids(),
        students,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_file(&manifest_path, |w| {
        serde_json::to_writer_pretty(w, &manifest).map_err(std::io::Error::other)
    })?;
    write_file(&out_dir.join("ground_truth.json"), |w| {
        serde_json::to_writer_pretty(w, &truths).map_err(std::io::Error::other)
    })?;
    Ok(GeneratedExam { manifest_path, manifest, truths })
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), SynthError> {
    let io = |source| SynthError::Io { path: path.to_owned(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    use std::io::Write;
    w.flush().map_err(io)
}

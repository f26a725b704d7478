//! Risk scoring and the statistics behind every console view.
//!
//! Per-question risk is the weighted sum of the four suspected-type counts
//! after each type has been min-max normalized across students on that
//! question. The student overview applies the same normalization to
//! session-level counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::{self, NormalizedSeries, SeriesSource, SessionDetection};
use crate::error::AnalysisError;
use crate::ingest::Exam;
use crate::model::{
    CaseKind, DetectionConfig, MouseEvent, NormalizedCounts, QuestionRiskProfile, QuestionSegment,
    Resolution, RiskWeights, SessionRecord, SuspectedCase, TypeCounts,
};
use crate::par::{self, ExecMode};

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Min-max to [0, 1]; an all-tie column maps to zeros.
pub fn minmax_unit(values: &[f64]) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    values.iter().map(|&v| if range > 0.0 { (v - min) / range } else { 0.0 }).collect()
}

/// Normalizes each type independently across the given students.
fn normalize_count_rows(rows: &[TypeCounts]) -> Vec<NormalizedCounts> {
    let mut out = vec![NormalizedCounts::default(); rows.len()];
    for (k, kind) in CaseKind::ALL.into_iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|c| c.get(kind) as f64).collect();
        for (i, v) in minmax_unit(&column).into_iter().enumerate() {
            let mut arr = out[i].as_array();
            arr[k] = v;
            out[i] = NormalizedCounts::from_array(arr);
        }
    }
    out
}

/// Per question and per type, maps the cohort minimum to 0 and maximum to 1.
/// Keys are `(student_id, question_id)`.
pub fn normalize_counts_per_question(
    counts: &BTreeMap<(String, String), TypeCounts>,
) -> Result<BTreeMap<(String, String), NormalizedCounts>, AnalysisError> {
    if counts.is_empty() {
        return Err(AnalysisError::EmptyInput("normalize_counts_per_question"));
    }
    type Rows<'a> = Vec<(&'a (String, String), TypeCounts)>;
    let mut by_question: BTreeMap<&str, Rows> = BTreeMap::new();
    for (key, c) in counts {
        by_question.entry(key.1.as_str()).or_default().push((key, *c));
    }
    let mut out = BTreeMap::new();
    for rows in by_question.values() {
        let counts: Vec<TypeCounts> = rows.iter().map(|(_, c)| *c).collect();
        for ((key, _), norm) in rows.iter().zip(normalize_count_rows(&counts)) {
            out.insert((*key).clone(), norm);
        }
    }
    Ok(out)
}

/// `w_f n_f + w_h n_h + w_c n_c + w_b n_b`.
pub fn question_risk(normalized: &NormalizedCounts, weights: &RiskWeights) -> f64 {
    weights.w_f * normalized.f
        + weights.w_h * normalized.h
        + weights.w_c * normalized.c
        + weights.w_b * normalized.b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

/// Quartiles by linear interpolation at position `(n - 1) q`.
pub fn cohort_boxstats(values: &[f64]) -> Result<BoxStats, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput("cohort_boxstats"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BoxStats {
        q1: quantile_sorted(&sorted, 0.25),
        q2: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Quartiles of each normalized type column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeBoxStats {
    pub f: BoxStats,
    pub h: BoxStats,
    pub c: BoxStats,
    pub b: BoxStats,
}

fn type_boxstats(rows: &[NormalizedCounts]) -> Result<TypeBoxStats, AnalysisError> {
    let col = |k: usize| rows.iter().map(|r| r.as_array()[k]).collect::<Vec<_>>();
    Ok(TypeBoxStats {
        f: cohort_boxstats(&col(0))?,
        h: cohort_boxstats(&col(1))?,
        c: cohort_boxstats(&col(2))?,
        b: cohort_boxstats(&col(3))?,
    })
}

fn type_means(rows: &[NormalizedCounts]) -> NormalizedCounts {
    let mut sums = [0.0; 4];
    for r in rows {
        for (s, v) in sums.iter_mut().zip(r.as_array()) {
            *s += v;
        }
    }
    let n = rows.len().max(1) as f64;
    NormalizedCounts::from_array(sums.map(|s| s / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRiskEntry {
    pub question_id: String,
    pub risk: f64,
    pub time_spent_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRiskOverview {
    pub student_id: String,
    pub normalized: NormalizedCounts,
    pub total_risk: f64,
    pub time_fraction: f64,
    pub score_fraction: f64,
    pub question_risks: Vec<QuestionRiskEntry>,
}

/// Session-level inputs of one student's overview row.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTotals {
    pub student_id: String,
    pub totals: TypeCounts,
    pub time_fraction: f64,
    pub score_fraction: f64,
    pub question_risks: Vec<QuestionRiskEntry>,
}

/// Sorts by descending total risk, ties by ascending student id.
pub fn sort_by_risk(overviews: &mut [StudentRiskOverview]) {
    overviews.sort_by(|a, b| b.total_risk.total_cmp(&a.total_risk).then_with(|| a.student_id.cmp(&b.student_id)));
}

/// Normalizes session-level counts across students and ranks them.
pub fn student_overview(students: &[StudentTotals], weights: &RiskWeights) -> Vec<StudentRiskOverview> {
    let rows: Vec<TypeCounts> = students.iter().map(|s| s.totals).collect();
    let mut out: Vec<StudentRiskOverview> = students
        .iter()
        .zip(normalize_count_rows(&rows))
        .map(|(s, normalized)| StudentRiskOverview {
            student_id: s.student_id.clone(),
            normalized,
            total_risk: question_risk(&normalized, weights),
            time_fraction: s.time_fraction,
            score_fraction: s.score_fraction,
            question_risks: s.question_risks.clone(),
        })
        .collect();
    sort_by_risk(&mut out);
    out
}

/// Cohort averages and quartiles over the overview rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub mean: NormalizedCounts,
    pub boxstats: TypeBoxStats,
    pub total_risk: BoxStats,
    pub mean_total_risk: f64,
    pub mean_time_fraction: f64,
    pub mean_score_fraction: f64,
}

pub fn cohort_summary(overviews: &[StudentRiskOverview]) -> Result<CohortSummary, AnalysisError> {
    let rows: Vec<NormalizedCounts> = overviews.iter().map(|o| o.normalized).collect();
    let totals: Vec<f64> = overviews.iter().map(|o| o.total_risk).collect();
    Ok(CohortSummary {
        mean: type_means(&rows),
        boxstats: type_boxstats(&rows)?,
        total_risk: cohort_boxstats(&totals)?,
        mean_total_risk: mean(&totals),
        mean_time_fraction: mean(&overviews.iter().map(|o| o.time_fraction).collect::<Vec<_>>()),
        mean_score_fraction: mean(&overviews.iter().map(|o| o.score_fraction).collect::<Vec<_>>()),
    })
}

/// Cohort statistics of one question, shown alongside every student's block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCohortStats {
    pub question_id: String,
    pub boxstats: TypeBoxStats,
    pub mean: NormalizedCounts,
    pub mean_risk: f64,
    pub mean_time_spent_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionHistogram {
    pub source: SeriesSource,
    pub bin_count: usize,
    pub frequencies: Vec<f64>,
}

impl DistributionHistogram {
    pub fn total(&self) -> f64 {
        self.frequencies.iter().sum()
    }
}

/// Equal-width bins over [-1, 1]; the last bin is closed on the right.
pub fn histogram_of(
    source: SeriesSource,
    values: impl IntoIterator<Item = f64>,
    bins: usize,
) -> Result<DistributionHistogram, AnalysisError> {
    if bins < 1 {
        return Err(AnalysisError::InvalidArgument("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for v in values {
        let pos = (v.clamp(-1.0, 1.0) + 1.0) * bins as f64 / 2.0;
        let bin = (pos.floor() as usize).min(bins - 1);
        counts[bin] += 1;
        total += 1;
    }
    let frequencies = counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    Ok(DistributionHistogram { source, bin_count: bins, frequencies })
}

pub fn distribution_histogram(
    series: &NormalizedSeries,
    bins: usize,
) -> Result<DistributionHistogram, AnalysisError> {
    histogram_of(series.source, series.values.iter().copied(), bins)
}

/// All normalized signals of one session, computed once per analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSeries {
    pub pitch: NormalizedSeries,
    pub yaw: NormalizedSeries,
    pub x_min: NormalizedSeries,
    pub y_min: NormalizedSeries,
    pub x_max: NormalizedSeries,
    pub y_max: NormalizedSeries,
    pub mouse_x: NormalizedSeries,
    pub mouse_y: NormalizedSeries,
}

impl SessionSeries {
    pub fn from_session(session: &SessionRecord) -> Self {
        let s = |src| detect::normalized_series(session, src);
        Self {
            pitch: s(SeriesSource::Pitch),
            yaw: s(SeriesSource::Yaw),
            x_min: s(SeriesSource::XMin),
            y_min: s(SeriesSource::YMin),
            x_max: s(SeriesSource::XMax),
            y_max: s(SeriesSource::YMax),
            mouse_x: s(SeriesSource::MouseX),
            mouse_y: s(SeriesSource::MouseY),
        }
    }

    /// The six head channels in view order: x lower, yaw, x upper, y lower,
    /// pitch, y upper.
    pub fn head_channels(&self) -> [&NormalizedSeries; 6] {
        [&self.x_min, &self.yaw, &self.x_max, &self.y_min, &self.pitch, &self.y_max]
    }
}

/// Histograms of the three columns (lower bound of position, pose, upper
/// bound of position) for each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHistograms {
    pub x_lower: DistributionHistogram,
    pub yaw: DistributionHistogram,
    pub x_upper: DistributionHistogram,
    pub y_lower: DistributionHistogram,
    pub pitch: DistributionHistogram,
    pub y_upper: DistributionHistogram,
}

impl ChannelHistograms {
    fn build(
        bins: usize,
        samples: impl Fn(usize) -> Vec<f64>,
        sources: [SeriesSource; 6],
    ) -> Result<Self, AnalysisError> {
        let h = |k: usize| histogram_of(sources[k], samples(k), bins);
        Ok(Self { x_lower: h(0)?, yaw: h(1)?, x_upper: h(2)?, y_lower: h(3)?, pitch: h(4)?, y_upper: h(5)? })
    }

    pub fn all(&self) -> [&DistributionHistogram; 6] {
        [&self.x_lower, &self.yaw, &self.x_upper, &self.y_lower, &self.pitch, &self.y_upper]
    }
}

const HEAD_SOURCES: [SeriesSource; 6] = [
    SeriesSource::XMin,
    SeriesSource::Yaw,
    SeriesSource::XMax,
    SeriesSource::YMin,
    SeriesSource::Pitch,
    SeriesSource::YMax,
];

/// Peer comparison: `left` pools every other student on this question,
/// `right` pools this student on every other question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerContext {
    pub student_id: String,
    pub question_id: String,
    pub left: ChannelHistograms,
    pub right: ChannelHistograms,
}

pub fn peer_context(
    exam: &Exam,
    series: &[SessionSeries],
    student_id: &str,
    question_id: &str,
    bins: usize,
) -> Result<PeerContext, AnalysisError> {
    let me = exam
        .sessions
        .iter()
        .position(|s| s.student_id == student_id)
        .ok_or_else(|| AnalysisError::UnknownStudent(student_id.to_owned()))?;
    if exam.question_index(question_id).is_none() {
        return Err(AnalysisError::UnknownQuestion(question_id.to_owned()));
    }
    let left = ChannelHistograms::build(
        bins,
        |k| {
            exam.sessions
                .iter()
                .zip(series)
                .enumerate()
                .filter(|(i, _)| *i != me)
                .filter_map(|(_, (session, ser))| session.segment(question_id).map(|seg| (seg, ser)))
                .flat_map(|(seg, ser)| ser.head_channels()[k].within(seg).collect::<Vec<_>>())
                .collect()
        },
        HEAD_SOURCES,
    )?;
    let mine = &exam.sessions[me];
    let right = ChannelHistograms::build(
        bins,
        |k| {
            mine.segments
                .iter()
                .filter(|seg| seg.question_id != question_id)
                .flat_map(|seg| series[me].head_channels()[k].within(seg).collect::<Vec<_>>())
                .collect()
        },
        HEAD_SOURCES,
    )?;
    Ok(PeerContext { student_id: student_id.to_owned(), question_id: question_id.to_owned(), left, right })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub cols: u32,
    pub rows: u32,
}

impl Default for GridDims {
    fn default() -> Self {
        Self { cols: 32, rows: 24 }
    }
}

/// Cumulative mouse visit counts per page cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwellGrid {
    pub dims: GridDims,
    pub counts: Vec<u64>,
    pub total: u64,
    pub up_to_ms: Option<i64>,
}

impl DwellGrid {
    fn empty(dims: GridDims, up_to_ms: Option<i64>) -> Self {
        Self { dims, counts: vec![0; dims.cols as usize * dims.rows as usize], total: 0, up_to_ms }
    }

    pub fn cell(&self, col: u32, row: u32) -> u64 {
        self.counts[(row * self.dims.cols + col) as usize]
    }

    fn add(&mut self, event: &MouseEvent, resolution: Resolution) {
        let Some((x, y)) = event.position() else { return };
        let (w, h) = (resolution.width as f64, resolution.height as f64);
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            return;
        }
        let cell_w = w / self.dims.cols as f64;
        let cell_h = h / self.dims.rows as f64;
        let col = ((x / cell_w).floor() as u32).min(self.dims.cols - 1);
        let row = ((y / cell_h).floor() as u32).min(self.dims.rows - 1);
        self.counts[(row * self.dims.cols + col) as usize] += 1;
        self.total += 1;
    }
}

/// Counts positioned events with `timestamp <= up_to_ms` (all when `None`)
/// that lie within the page bounds.
pub fn dwell_grid(
    events: &[MouseEvent],
    resolution: Resolution,
    dims: GridDims,
    up_to_ms: Option<i64>,
) -> Result<DwellGrid, AnalysisError> {
    if dims.cols == 0 || dims.rows == 0 {
        return Err(AnalysisError::InvalidArgument("grid dimensions must be positive".into()));
    }
    let mut grid = DwellGrid::empty(dims, up_to_ms);
    for e in events.iter().take_while(|e| up_to_ms.is_none_or(|t| e.timestamp_ms <= t)) {
        grid.add(e, resolution);
    }
    Ok(grid)
}

/// Cumulative grids at each cutoff, for animated playback. Cutoffs must be
/// ascending.
pub fn dwell_snapshots(
    events: &[MouseEvent],
    resolution: Resolution,
    dims: GridDims,
    cutoffs_ms: &[i64],
) -> Result<Vec<DwellGrid>, AnalysisError> {
    if cutoffs_ms.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::InvalidArgument("cutoffs must be ascending".into()));
    }
    let mut grid = dwell_grid(&[], resolution, dims, None)?;
    let mut next = 0;
    let mut out = Vec::with_capacity(cutoffs_ms.len());
    for &cut in cutoffs_ms {
        while next < events.len() && events[next].timestamp_ms <= cut {
            grid.add(&events[next], resolution);
            next += 1;
        }
        grid.up_to_ms = Some(cut);
        out.push(grid.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub t_ms: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub t_ms: i64,
    pub lower: f64,
    pub upper: f64,
}

/// Bucket boundaries splitting `n` items into `buckets` contiguous runs.
fn bucket_bounds(n: usize, buckets: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..buckets).map(move |k| (k * n / buckets, (k + 1) * n / buckets)).filter(|(a, b)| a < b)
}

/// Keeps every point when `points.len() <= max_points`; otherwise splits into
/// `max_points` buckets and keeps each bucket's minimum and maximum in time
/// order.
pub fn downsample_min_max(points: &[TimelinePoint], max_points: usize) -> Vec<TimelinePoint> {
    if points.len() <= max_points || max_points == 0 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(2 * max_points);
    for (a, b) in bucket_bounds(points.len(), max_points) {
        let chunk = &points[a..b];
        let lo = (0..chunk.len()).min_by(|&i, &j| chunk[i].value.total_cmp(&chunk[j].value)).unwrap_or(0);
        let hi = (0..chunk.len()).max_by(|&i, &j| chunk[i].value.total_cmp(&chunk[j].value)).unwrap_or(0);
        push_pair(&mut out, chunk, lo, hi);
    }
    out
}

/// Band variant: each bucket keeps its lowest `lower` and highest `upper`.
pub fn downsample_band(points: &[BandPoint], max_points: usize) -> Vec<BandPoint> {
    if points.len() <= max_points || max_points == 0 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(2 * max_points);
    for (a, b) in bucket_bounds(points.len(), max_points) {
        let chunk = &points[a..b];
        let lo = (0..chunk.len()).min_by(|&i, &j| chunk[i].lower.total_cmp(&chunk[j].lower)).unwrap_or(0);
        let hi = (0..chunk.len()).max_by(|&i, &j| chunk[i].upper.total_cmp(&chunk[j].upper)).unwrap_or(0);
        push_pair(&mut out, chunk, lo, hi);
    }
    out
}

fn push_pair<T: Copy>(out: &mut Vec<T>, chunk: &[T], a: usize, b: usize) {
    let (first, second) = if a <= b { (a, b) } else { (b, a) };
    out.push(chunk[first]);
    if second != first {
        out.push(chunk[second]);
    }
}

/// Everything the behavior charts show for one (student, question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTimeline {
    pub student_id: String,
    pub question_id: String,
    pub segment: QuestionSegment,
    pub mouse_x: Vec<TimelinePoint>,
    pub mouse_y: Vec<TimelinePoint>,
    pub yaw: Vec<TimelinePoint>,
    pub pitch: Vec<TimelinePoint>,
    pub x_band: Vec<BandPoint>,
    pub y_band: Vec<BandPoint>,
    pub cases: Vec<SuspectedCase>,
}

fn segment_points(series: &NormalizedSeries, seg: &QuestionSegment) -> Vec<TimelinePoint> {
    let lo = series.timestamps_ms.partition_point(|&t| t < seg.start_ms);
    let hi = series.timestamps_ms.partition_point(|&t| t < seg.end_ms);
    (lo..hi).map(|i| TimelinePoint { t_ms: series.timestamps_ms[i], value: series.values[i] }).collect()
}

fn segment_band(lower: &NormalizedSeries, upper: &NormalizedSeries, seg: &QuestionSegment) -> Vec<BandPoint> {
    // both bounds come from the same faced frames, so timestamps align
    segment_points(lower, seg)
        .into_iter()
        .zip(segment_points(upper, seg))
        .map(|(l, u)| BandPoint { t_ms: l.t_ms, lower: l.value, upper: u.value })
        .collect()
}

pub fn behavior_timeline(
    session: &SessionRecord,
    series: &SessionSeries,
    detection: &SessionDetection,
    question_id: &str,
    max_points: usize,
) -> Result<BehaviorTimeline, AnalysisError> {
    if max_points < 2 {
        return Err(AnalysisError::InvalidArgument(format!("max_points must be at least 2, got {max_points}")));
    }
    let seg = session
        .segment(question_id)
        .ok_or_else(|| AnalysisError::UnknownQuestion(question_id.to_owned()))?;
    let pts = |s: &NormalizedSeries| downsample_min_max(&segment_points(s, seg), max_points);
    Ok(BehaviorTimeline {
        student_id: session.student_id.clone(),
        question_id: question_id.to_owned(),
        segment: seg.clone(),
        mouse_x: pts(&series.mouse_x),
        mouse_y: pts(&series.mouse_y),
        yaw: pts(&series.yaw),
        pitch: pts(&series.pitch),
        x_band: downsample_band(&segment_band(&series.x_min, &series.x_max, seg), max_points),
        y_band: downsample_band(&segment_band(&series.y_min, &series.y_max, seg), max_points),
        cases: detection.cases.iter().filter(|c| seg.contains(c.timestamp_ms)).cloned().collect(),
    })
}

/// Full analysis of one exam under one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamAnalysis {
    pub exam_id: String,
    pub config: DetectionConfig,
    pub questions: Vec<String>,
    /// Same order as the exam's sessions (ascending student id).
    pub detections: Vec<SessionDetection>,
    /// Student-major, then exam question order; every pair present.
    pub profiles: Vec<QuestionRiskProfile>,
    /// Ranked by total risk.
    pub overviews: Vec<StudentRiskOverview>,
    pub cohort: Option<CohortSummary>,
    pub question_cohorts: Vec<QuestionCohortStats>,
    #[serde(skip)]
    pub series: Vec<SessionSeries>,
}

impl ExamAnalysis {
    pub fn detection(&self, student_id: &str) -> Option<&SessionDetection> {
        self.detections.iter().find(|d| d.student_id == student_id)
    }

    pub fn student_profiles<'a>(&'a self, student_id: &'a str) -> impl Iterator<Item = &'a QuestionRiskProfile> + 'a {
        self.profiles.iter().filter(move |p| p.student_id == student_id)
    }

    pub fn question_cohort(&self, question_id: &str) -> Option<&QuestionCohortStats> {
        self.question_cohorts.iter().find(|q| q.question_id == question_id)
    }
}

/// Detection, risk scoring, and cohort statistics for a whole exam.
pub fn analyze_exam(exam: &Exam, config: &DetectionConfig, mode: ExecMode) -> ExamAnalysis {
    let detections = detect::detect_exam(exam, config, mode);
    let series = par::map_collect(mode, &exam.sessions, SessionSeries::from_session);
    analyze_detections(exam, config, detections, series)
}

pub fn analyze_detections(
    exam: &Exam,
    config: &DetectionConfig,
    detections: Vec<SessionDetection>,
    series: Vec<SessionSeries>,
) -> ExamAnalysis {
    let weights = &config.weights;
    let mut raw = BTreeMap::new();
    for (session, det) in exam.sessions.iter().zip(&detections) {
        for q in &exam.questions {
            raw.insert((session.student_id.clone(), q.clone()), det.question_counts(q));
        }
    }
    let normalized = normalize_counts_per_question(&raw).unwrap_or_default();

    let mut profiles = Vec::with_capacity(raw.len());
    for session in &exam.sessions {
        for q in &exam.questions {
            let key = (session.student_id.clone(), q.clone());
            let norm = normalized.get(&key).copied().unwrap_or_default();
            let seg = session.segment(q);
            profiles.push(QuestionRiskProfile {
                student_id: session.student_id.clone(),
                question_id: q.clone(),
                raw: raw[&key],
                normalized: norm,
                risk: question_risk(&norm, weights),
                time_spent_ms: seg.map_or(0, QuestionSegment::duration_ms),
                correct: seg.is_some_and(|s| s.correct),
            });
        }
    }

    let totals: Vec<StudentTotals> = exam
        .sessions
        .iter()
        .zip(&detections)
        .map(|(session, det)| StudentTotals {
            student_id: session.student_id.clone(),
            totals: det.totals,
            time_fraction: session.time_fraction(),
            score_fraction: session.score_fraction,
            question_risks: profiles
                .iter()
                .filter(|p| p.student_id == session.student_id)
                .map(|p| QuestionRiskEntry {
                    question_id: p.question_id.clone(),
                    risk: p.risk,
                    time_spent_ms: p.time_spent_ms,
                })
                .collect(),
        })
        .collect();
    let overviews = student_overview(&totals, weights);
    let cohort = cohort_summary(&overviews).ok();

    let question_cohorts = exam
        .questions
        .iter()
        .filter_map(|q| {
            let rows: Vec<&QuestionRiskProfile> = profiles.iter().filter(|p| &p.question_id == q).collect();
            let norms: Vec<NormalizedCounts> = rows.iter().map(|p| p.normalized).collect();
            Some(QuestionCohortStats {
                question_id: q.clone(),
                boxstats: type_boxstats(&norms).ok()?,
                mean: type_means(&norms),
                mean_risk: mean(&rows.iter().map(|p| p.risk).collect::<Vec<_>>()),
                mean_time_spent_ms: mean(&rows.iter().map(|p| p.time_spent_ms as f64).collect::<Vec<_>>()),
            })
        })
        .collect();

    ExamAnalysis {
        exam_id: exam.exam_id.clone(),
        config: *config,
        questions: exam.questions.clone(),
        detections,
        profiles,
        overviews,
        cohort,
        question_cohorts,
        series,
    }
}

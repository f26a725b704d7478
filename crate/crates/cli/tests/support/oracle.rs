//! Naive reimplementations used to cross-check the engine. Every routine here
//! scans linearly and shares no code with the engine beyond the data types.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proctor_core::{CaseKind, MouseEvent, MouseEventKind, QuestionSegment, SessionRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub timestamp_ms: i64,
    pub kind: CaseKind,
    pub question_id: Option<String>,
    pub frame_index: Option<u64>,
    pub event: Option<MouseEventKind>,
    pub off_page_context: Option<bool>,
}

pub fn kind_index(kind: CaseKind) -> usize {
    match kind {
        CaseKind::FaceDisappearance => 0,
        CaseKind::AbnormalHeadPose => 1,
        CaseKind::CopyPaste => 2,
        CaseKind::BlurFocus => 3,
    }
}

/// Question whose `[start, end)` contains `t`, by scanning every segment.
pub fn attribute(segments: &[QuestionSegment], t: i64) -> Option<String> {
    let mut found = None;
    for s in segments {
        if s.start_ms <= t && t < s.end_ms {
            found = Some(s.question_id.clone());
        }
    }
    found
}

/// `[-1, 1]` rescale; constant input gives zeros.
pub fn signed_unit(raw: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in raw {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    raw.iter().map(|&v| if hi > lo { (v - lo) / (hi - lo) * 2.0 - 1.0 } else { 0.0 }).collect()
}

fn mean_and_population_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for v in values {
        sq += (v - mean) * (v - mean);
    }
    (mean, (sq / n).sqrt())
}

pub fn session_cases(session: &SessionRecord, z_threshold: f64, context_window_ms: i64) -> Vec<OracleCase> {
    let mut out = Vec::new();
    let seg = |t| attribute(&session.segments, t);

    for o in &session.observations {
        if o.face.is_none() {
            out.push(OracleCase {
                timestamp_ms: o.timestamp_ms,
                kind: CaseKind::FaceDisappearance,
                question_id: seg(o.timestamp_ms),
                frame_index: Some(o.frame_index),
                event: None,
                off_page_context: None,
            });
        }
    }

    let posed: Vec<_> = session.observations.iter().filter(|o| o.pose.is_some()).collect();
    if !posed.is_empty() {
        let pitch = signed_unit(&posed.iter().map(|o| o.pose.unwrap().pitch).collect::<Vec<_>>());
        let yaw = signed_unit(&posed.iter().map(|o| o.pose.unwrap().yaw).collect::<Vec<_>>());
        let (mp, sp) = mean_and_population_sd(&pitch);
        let (my, sy) = mean_and_population_sd(&yaw);
        for (i, o) in posed.iter().enumerate() {
            let zp = if sp > 0.0 { (pitch[i] - mp) / sp } else { 0.0 };
            let zy = if sy > 0.0 { (yaw[i] - my) / sy } else { 0.0 };
            if zp.abs() > z_threshold || zy.abs() > z_threshold {
                out.push(OracleCase {
                    timestamp_ms: o.timestamp_ms,
                    kind: CaseKind::AbnormalHeadPose,
                    question_id: seg(o.timestamp_ms),
                    frame_index: Some(o.frame_index),
                    event: None,
                    off_page_context: None,
                });
            }
        }
    }

    for e in &session.mouse_events {
        match e.kind {
            MouseEventKind::Copy | MouseEventKind::Paste => {
                let mut near = false;
                for other in &session.mouse_events {
                    if matches!(other.kind, MouseEventKind::Blur | MouseEventKind::Focus)
                        && (other.timestamp_ms - e.timestamp_ms).abs() <= context_window_ms
                    {
                        near = true;
                    }
                }
                out.push(OracleCase {
                    timestamp_ms: e.timestamp_ms,
                    kind: CaseKind::CopyPaste,
                    question_id: seg(e.timestamp_ms),
                    frame_index: None,
                    event: Some(e.kind),
                    off_page_context: Some(near),
                });
            }
            MouseEventKind::Blur | MouseEventKind::Focus => out.push(OracleCase {
                timestamp_ms: e.timestamp_ms,
                kind: CaseKind::BlurFocus,
                question_id: seg(e.timestamp_ms),
                frame_index: None,
                event: Some(e.kind),
                off_page_context: None,
            }),
            _ => {}
        }
    }
    out
}

pub fn tally(cases: &[OracleCase]) -> [u64; 4] {
    let mut c = [0; 4];
    for case in cases {
        c[kind_index(case.kind)] += 1;
    }
    c
}

pub fn per_question(cases: &[OracleCase], segments: &[QuestionSegment]) -> BTreeMap<String, [u64; 4]> {
    let mut out = BTreeMap::new();
    for s in segments {
        let mut c = [0; 4];
        for case in cases {
            if case.question_id.as_deref() == Some(s.question_id.as_str()) {
                c[kind_index(case.kind)] += 1;
            }
        }
        out.insert(s.question_id.clone(), c);
    }
    out
}

/// Column-wise `[0, 1]` rescale across rows; a tied column gives zeros.
pub fn unit_columns(rows: &[[u64; 4]]) -> Vec<[f64; 4]> {
    let mut out = vec![[0.0; 4]; rows.len()];
    for k in 0..4 {
        let lo = rows.iter().map(|r| r[k]).min().unwrap_or(0) as f64;
        let hi = rows.iter().map(|r| r[k]).max().unwrap_or(0) as f64;
        for (i, r) in rows.iter().enumerate() {
            out[i][k] = if hi > lo { (r[k] as f64 - lo) / (hi - lo) } else { 0.0 };
        }
    }
    out
}

pub fn weighted(n: &[f64; 4], w: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for k in 0..4 {
        s += n[k] * w[k];
    }
    s
}

/// Quartiles by interpolating between the two order statistics around
/// position `(n - 1) q`.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| {
        let p = (s.len() - 1) as f64 * q;
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (p - lo as f64) * (s[hi] - s[lo])
    };
    (at(0.25), at(0.5), at(0.75))
}

/// Relative frequencies over equal bins of [-1, 1] by testing each value
/// against explicit edges. The last bin includes 1.
pub fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let edge = |k: usize| -1.0 + 2.0 * k as f64 / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let v = v.clamp(-1.0, 1.0);
        for (k, count) in counts.iter_mut().enumerate() {
            let last = k + 1 == bins;
            if v >= edge(k) && (v < edge(k + 1) || last) {
                *count += 1;
                break;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
}

/// Visit counts by scanning every cell for each event. Row-major.
pub fn dwell(events: &[MouseEvent], width: f64, height: f64, cols: u32, rows: u32, up_to: Option<i64>) -> Vec<u64> {
    let cw = width / cols as f64;
    let ch = height / rows as f64;
    let mut grid = vec![0u64; (cols * rows) as usize];
    for e in events {
        if up_to.is_some_and(|t| e.timestamp_ms > t) {
            continue;
        }
        let (Some(x), Some(y)) = (e.x, e.y) else { continue };
        if x < 0.0 || x > width || y < 0.0 || y > height {
            continue;
        }
        for r in 0..rows {
            for c in 0..cols {
                let in_x = x >= c as f64 * cw && (x < (c + 1) as f64 * cw || c + 1 == cols);
                let in_y = y >= r as f64 * ch && (y < (r + 1) as f64 * ch || r + 1 == rows);
                if in_x && in_y {
                    grid[(r * cols + c) as usize] += 1;
                }
            }
        }
    }
    grid
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

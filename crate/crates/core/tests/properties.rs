use std::collections::{BTreeMap, BTreeSet};

use proctor_core::analytics::{
    cohort_boxstats, downsample_min_max, dwell_grid, histogram_of, minmax_unit, normalize_counts_per_question,
    question_risk, sort_by_risk, student_overview, GridDims, StudentTotals, TimelinePoint,
};
use proctor_core::detect::{detect_session, normalize_signed, pose_stats, z_scores, SeriesSource};
use proctor_core::ingest::{filter_low_confidence, parse_frame_observations, parse_mouse_events, sample_frames};
use proctor_core::ingest::{write_frame_observations, write_mouse_events};
use proctor_core::*;
use proptest::prelude::*;

type RawFrame = (Option<(f64, f64, f64, f64)>, bool);

fn frame_strategy() -> impl Strategy<Value = RawFrame> {
    (
        prop::option::weighted(0.9, (0.5f64..1.0, -60.0f64..60.0, -60.0f64..60.0, -30.0f64..30.0)),
        any::<bool>(),
    )
}

fn observations(raw: Vec<RawFrame>) -> Vec<FrameObservation> {
    raw.into_iter()
        .enumerate()
        .map(|(i, (face, _))| {
            let (face, pose) = match face {
                Some((conf, p, y, r)) => (
                    Some(Face::new(BoundingBox::new(100.0, 80.0, 260.0, 280.0).unwrap(), conf).unwrap()),
                    Some(HeadPose::new(p, y, r).unwrap()),
                ),
                None => (None, None),
            };
            FrameObservation::new(i as u64, 30.0, face, pose).unwrap()
        })
        .collect()
}

fn mouse_strategy() -> impl Strategy<Value = Vec<MouseEvent>> {
    prop::collection::vec((0i64..60_000, 0usize..6, -20.0f64..660.0, -20.0f64..500.0), 0..120).prop_map(|raw| {
        let mut events: Vec<MouseEvent> = raw
            .into_iter()
            .map(|(t, k, x, y)| {
                let kind = MouseEventKind::ALL[k];
                let pos = kind.is_positioned().then_some((x, y));
                MouseEvent::new(t, kind, pos.map(|p| p.0), pos.map(|p| p.1)).unwrap()
            })
            .collect();
        events.sort_by_key(|e| e.timestamp_ms);
        events
    })
}

fn session_strategy() -> impl Strategy<Value = SessionRecord> {
    (prop::collection::vec(frame_strategy(), 1..400), mouse_strategy(), 1usize..5).prop_map(|(frames, mouse, nq)| {
        let observations = filter_low_confidence(&observations(frames), 0.6);
        let span = 60_000 / nq as i64;
        let segments = (0..nq)
            .map(|q| QuestionSegment {
                question_id: format!("q{q}"),
                start_ms: 1000 + q as i64 * span,
                end_ms: ((q + 1) as i64 * span).min(59_000),
                correct: q % 2 == 0,
            })
            .filter(|s| s.start_ms < s.end_ms)
            .collect();
        SessionRecord {
            student_id: "s".into(),
            exam_id: "e".into(),
            fps: 30.0,
            resolution: Resolution::default(),
            observations,
            mouse_events: mouse,
            segments,
            score_fraction: 0.5,
            duration_ms: 60_000,
            time_limit_ms: 60_000,
            video: None,
        }
    })
}

fn case_key(c: &SuspectedCase) -> String {
    serde_json::to_string(&(c.timestamp_ms, c.kind(), &c.question_id)).unwrap()
        + match &c.detail {
            CaseDetail::AbnormalHeadPose { frame_index, .. } => format!("#{frame_index}"),
            CaseDetail::FaceDisappearance { frame_index } => format!("#{frame_index}"),
            CaseDetail::CopyPaste { event, .. } | CaseDetail::BlurFocus { event } => format!("{event:?}"),
        }
        .as_str()
}

fn counts_strategy() -> impl Strategy<Value = TypeCounts> {
    (0u64..20, 0u64..20, 0u64..20, 0u64..20).prop_map(|(n_f, n_h, n_c, n_b)| TypeCounts { n_f, n_h, n_c, n_b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampling_and_filtering_commute(frames in prop::collection::vec(frame_strategy(), 0..200), stride in 1u32..9, floor in 0.5f64..1.0) {
        let obs = observations(frames);
        let a = filter_low_confidence(&sample_frames(&obs, stride).unwrap(), floor);
        let b = sample_frames(&filter_low_confidence(&obs, floor), stride).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn filtering_never_drops_frames(frames in prop::collection::vec(frame_strategy(), 0..200), floor in 0.0f64..1.0) {
        let obs = observations(frames);
        let filtered = filter_low_confidence(&obs, floor);
        prop_assert_eq!(filtered.len(), obs.len());
        for f in &filtered {
            if let Some(face) = f.face {
                prop_assert!(face.confidence > floor);
            } else {
                prop_assert!(f.pose.is_none());
            }
        }
    }

    #[test]
    fn normalized_values_are_bounded(raw in prop::collection::vec(-180.0f64..180.0, 1..300)) {
        let n = normalize_signed(&raw).unwrap();
        prop_assert!(n.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn affine_rescaling_leaves_z_unchanged(
        raw in prop::collection::vec((-90.0f64..90.0, -90.0f64..90.0), 2..200),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let (p, y): (Vec<f64>, Vec<f64>) = raw.iter().copied().unzip();
        let p2: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let y2: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let (np, ny) = (normalize_signed(&p).unwrap(), normalize_signed(&y).unwrap());
        let (np2, ny2) = (normalize_signed(&p2).unwrap(), normalize_signed(&y2).unwrap());
        let s1 = pose_stats(&np, &ny).unwrap();
        let s2 = pose_stats(&np2, &ny2).unwrap();
        for i in 0..np.len() {
            let (zp1, zy1) = z_scores(np[i], ny[i], &s1);
            let (zp2, zy2) = z_scores(np2[i], ny2[i], &s2);
            prop_assert!((zp1 - zp2).abs() < 1e-6, "{} vs {}", zp1, zp2);
            prop_assert!((zy1 - zy2).abs() < 1e-6, "{} vs {}", zy1, zy2);
        }
    }

    #[test]
    fn lower_threshold_flags_a_superset(session in session_strategy(), lo in 0.5f64..3.0, gap in 0.0f64..2.0) {
        let low = DetectionConfig { z_threshold: lo, ..DetectionConfig::default() };
        let high = DetectionConfig { z_threshold: lo + gap, ..DetectionConfig::default() };
        let at_low: BTreeSet<String> = detect_session(&session, &low).cases.iter().map(case_key).collect();
        let at_high: BTreeSet<String> = detect_session(&session, &high).cases.iter().map(case_key).collect();
        prop_assert!(at_high.is_subset(&at_low));
    }

    #[test]
    fn every_case_is_counted_once(session in session_strategy()) {
        let det = detect_session(&session, &DetectionConfig::default());
        let summed: TypeCounts = det.per_question.values().copied().sum::<TypeCounts>() + det.unattributed;
        prop_assert_eq!(summed, det.totals);
        prop_assert_eq!(det.totals.total() as usize, det.cases.len());
        for c in &det.cases {
            let seg = c.question_id.as_ref().and_then(|q| session.segment(q));
            match seg {
                Some(s) => prop_assert!(s.contains(c.timestamp_ms)),
                None => prop_assert!(session.segments.iter().all(|s| !s.contains(c.timestamp_ms))),
            }
        }
    }

    #[test]
    fn mouse_cases_mirror_clipboard_and_page_events(session in session_strategy()) {
        let det = detect_session(&session, &DetectionConfig::default());
        let clip = session.mouse_events.iter().filter(|e| e.kind.is_clipboard()).count() as u64;
        let page = session.mouse_events.iter().filter(|e| e.kind.is_page_switch()).count() as u64;
        prop_assert_eq!(det.totals.n_c, clip);
        prop_assert_eq!(det.totals.n_b, page);
        let sampled_faceless = session.observations.iter().filter(|o| o.face.is_none()).count() as u64;
        prop_assert_eq!(det.totals.n_f, sampled_faceless);
    }

    #[test]
    fn risk_is_linear_in_weights(
        n in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
        w1 in (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.1f64..5.0),
        w2 in (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.1f64..5.0),
        a in 0.0f64..3.0,
        b in 0.0f64..3.0,
    ) {
        let n = NormalizedCounts::new(n.0, n.1, n.2, n.3);
        let w1 = RiskWeights::new(w1.0, w1.1, w1.2, w1.3).unwrap();
        let w2 = RiskWeights::new(w2.0, w2.1, w2.2, w2.3).unwrap();
        let mixed = RiskWeights::new(
            a * w1.w_f + b * w2.w_f,
            a * w1.w_h + b * w2.w_h,
            a * w1.w_c + b * w2.w_c,
            a * w1.w_b + b * w2.w_b,
        );
        if let Ok(mixed) = mixed {
            let lhs = question_risk(&n, &mixed);
            let rhs = a * question_risk(&n, &w1) + b * question_risk(&n, &w2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn weight_scaling_preserves_ranking(
        rows in prop::collection::vec(counts_strategy(), 1..30),
        w in (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0),
        exp in -8i32..8,
    ) {
        let students: Vec<StudentTotals> = rows
            .iter()
            .enumerate()
            .map(|(i, c)| StudentTotals {
                student_id: format!("s{i:03}"),
                totals: *c,
                time_fraction: 0.5,
                score_fraction: 0.5,
                question_risks: vec![],
            })
            .collect();
        let w = RiskWeights::new(w.0, w.1, w.2, w.3).unwrap();
        let ids = |ws: &RiskWeights| student_overview(&students, ws).into_iter().map(|o| o.student_id).collect::<Vec<_>>();
        prop_assert_eq!(ids(&w), ids(&w.scaled(2f64.powi(exp))));
    }

    #[test]
    fn normalized_columns_span_unit_interval(
        table in prop::collection::vec(prop::collection::vec(counts_strategy(), 3), 1..12),
    ) {
        let mut counts = BTreeMap::new();
        for (s, row) in table.iter().enumerate() {
            for (q, c) in row.iter().enumerate() {
                counts.insert((format!("s{s}"), format!("q{q}")), *c);
            }
        }
        let norm = normalize_counts_per_question(&counts).unwrap();
        prop_assert_eq!(norm.len(), counts.len());
        for q in 0..3 {
            for k in CaseKind::ALL {
                let col: Vec<(f64, u64)> = counts
                    .iter()
                    .filter(|(key, _)| key.1 == format!("q{q}"))
                    .map(|(key, c)| (norm[key].get(k), c.get(k)))
                    .collect();
                let raw_max = col.iter().map(|c| c.1).max().unwrap();
                let raw_min = col.iter().map(|c| c.1).min().unwrap();
                for (v, raw) in &col {
                    prop_assert!((0.0..=1.0).contains(v));
                    if raw_min == raw_max {
                        prop_assert_eq!(*v, 0.0);
                    } else if *raw == raw_max {
                        prop_assert_eq!(*v, 1.0);
                    } else if *raw == raw_min {
                        prop_assert_eq!(*v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn minmax_preserves_order(values in prop::collection::vec(-1e6f64..1e6, 1..100)) {
        let n = minmax_unit(&values);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(n[i] <= n[j]);
                }
            }
        }
    }

    #[test]
    fn sorting_is_by_risk_then_id(risks in prop::collection::vec(0u8..4, 1..40)) {
        let mut rows: Vec<_> = risks
            .iter()
            .enumerate()
            .map(|(i, r)| analytics::StudentRiskOverview {
                student_id: format!("s{:02}", (i * 7) % 41),
                normalized: NormalizedCounts::default(),
                total_risk: f64::from(*r),
                time_fraction: 0.0,
                score_fraction: 0.0,
                question_risks: vec![],
            })
            .collect();
        sort_by_risk(&mut rows);
        for w in rows.windows(2) {
            prop_assert!(w[0].total_risk > w[1].total_risk
                || (w[0].total_risk == w[1].total_risk && w[0].student_id < w[1].student_id));
        }
    }

    #[test]
    fn histogram_mass_is_one(values in prop::collection::vec(-1.0f64..=1.0, 1..500), bins in 1usize..64) {
        let h = histogram_of(SeriesSource::Yaw, values.iter().copied(), bins).unwrap();
        prop_assert_eq!(h.frequencies.len(), bins);
        prop_assert!((h.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dwell_grid_counts_every_visible_event(events in mouse_strategy(), cutoff in prop::option::of(0i64..60_000)) {
        let res = Resolution::default();
        let grid = dwell_grid(&events, res, GridDims::default(), cutoff).unwrap();
        let expected = events
            .iter()
            .filter(|e| cutoff.is_none_or(|c| e.timestamp_ms <= c))
            .filter_map(MouseEvent::position)
            .filter(|&(x, y)| (0.0..=640.0).contains(&x) && (0.0..=480.0).contains(&y))
            .count() as u64;
        prop_assert_eq!(grid.total, expected);
        prop_assert_eq!(grid.counts.iter().sum::<u64>(), expected);
    }

    #[test]
    fn quartiles_are_ordered_and_bracketed(values in prop::collection::vec(-100.0f64..100.0, 1..200)) {
        let b = cohort_boxstats(&values).unwrap();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= b.q1 && b.q1 <= b.q2 && b.q2 <= b.q3 && b.q3 <= max);
    }

    #[test]
    fn downsampling_keeps_extremes(values in prop::collection::vec(-1.0f64..1.0, 0..2000), max_points in 2usize..200) {
        let pts: Vec<TimelinePoint> = values.iter().enumerate().map(|(i, &v)| TimelinePoint { t_ms: i as i64, value: v }).collect();
        let out = downsample_min_max(&pts, max_points);
        prop_assert!(out.len() <= 2 * max_points);
        prop_assert!(out.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
        if !pts.is_empty() {
            let fold = |f: fn(f64, f64) -> f64, init| pts.iter().map(|p| p.value).fold(init, f);
            let out_fold = |f: fn(f64, f64) -> f64, init| out.iter().map(|p| p.value).fold(init, f);
            prop_assert_eq!(fold(f64::min, f64::INFINITY), out_fold(f64::min, f64::INFINITY));
            prop_assert_eq!(fold(f64::max, f64::NEG_INFINITY), out_fold(f64::max, f64::NEG_INFINITY));
        }
    }

    #[test]
    fn wire_format_round_trips(session in session_strategy()) {
        let mut frames = Vec::new();
        write_frame_observations(&mut frames, &session.observations).unwrap();
        let back = parse_frame_observations(frames.as_slice(), session.fps).unwrap();
        prop_assert_eq!(&back, &session.observations);

        let mut mouse = Vec::new();
        write_mouse_events(&mut mouse, &session.mouse_events).unwrap();
        prop_assert_eq!(&parse_mouse_events(mouse.as_slice()).unwrap(), &session.mouse_events);

        let json = serde_json::to_string(&session).unwrap();
        let restored: SessionRecord = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(restored, session);
    }
}

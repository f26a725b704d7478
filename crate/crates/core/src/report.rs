//! Exported report documents.

use serde::{Deserialize, Serialize};

use crate::analytics::{sort_by_risk, CohortSummary, ExamAnalysis, StudentRiskOverview};
use crate::detect::SessionDetection;
use crate::model::{DetectionConfig, QuestionRiskProfile, SuspectedCase, TypeCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentOrder {
    /// Descending total risk, ties by student id.
    #[default]
    Risk,
    StudentId,
}

impl StudentOrder {
    pub fn apply(self, rows: &mut [StudentRiskOverview]) {
        match self {
            StudentOrder::Risk => sort_by_risk(rows),
            StudentOrder::StudentId => rows.sort_by(|a, b| a.student_id.cmp(&b.student_id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentCases {
    pub student_id: String,
    pub cases: Vec<SuspectedCase>,
}

/// Complete per-exam export: ranked students, every question profile, and the
/// suspected cases behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamReport {
    pub exam_id: String,
    pub config: DetectionConfig,
    pub questions: Vec<String>,
    pub students: Vec<StudentRiskOverview>,
    pub cohort: Option<CohortSummary>,
    pub profiles: Vec<QuestionRiskProfile>,
    pub cases: Vec<StudentCases>,
}

impl ExamReport {
    pub fn from_analysis(analysis: &ExamAnalysis, order: StudentOrder) -> Self {
        let mut students = analysis.overviews.clone();
        order.apply(&mut students);
        Self {
            exam_id: analysis.exam_id.clone(),
            config: analysis.config,
            questions: analysis.questions.clone(),
            students,
            cohort: analysis.cohort.clone(),
            profiles: analysis.profiles.clone(),
            cases: analysis
                .detections
                .iter()
                .map(|d| StudentCases { student_id: d.student_id.clone(), cases: d.cases.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCaseReport {
    pub student_id: String,
    pub totals: TypeCounts,
    pub per_question: std::collections::BTreeMap<String, TypeCounts>,
    pub unattributed: TypeCounts,
    pub cases: Vec<SuspectedCase>,
}

impl From<&SessionDetection> for SessionCaseReport {
    fn from(d: &SessionDetection) -> Self {
        Self {
            student_id: d.student_id.clone(),
            totals: d.totals,
            per_question: d.per_question.clone(),
            unattributed: d.unattributed,
            cases: d.cases.clone(),
        }
    }
}

/// Suspected cases and counts for every session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub exam_id: String,
    pub config: DetectionConfig,
    pub totals: TypeCounts,
    pub sessions: Vec<SessionCaseReport>,
}

impl DetectionReport {
    pub fn new(exam_id: &str, config: DetectionConfig, detections: &[SessionDetection]) -> Self {
        Self {
            exam_id: exam_id.to_owned(),
            config,
            totals: detections.iter().map(|d| d.totals).sum(),
            sessions: detections.iter().map(SessionCaseReport::from).collect(),
        }
    }
}

/// Flat row of the ranked student table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRow {
    pub rank: usize,
    pub student_id: String,
    pub total_risk: f64,
    pub face_disappearance: f64,
    pub abnormal_head_pose: f64,
    pub copy_paste: f64,
    pub blur_focus: f64,
    pub time_fraction: f64,
    pub score_fraction: f64,
}

pub fn student_rows(students: &[StudentRiskOverview]) -> Vec<StudentRow> {
    students
        .iter()
        .enumerate()
        .map(|(i, s)| StudentRow {
            rank: i + 1,
            student_id: s.student_id.clone(),
            total_risk: s.total_risk,
            face_disappearance: s.normalized.f,
            abnormal_head_pose: s.normalized.h,
            copy_paste: s.normalized.c,
            blur_focus: s.normalized.b,
            time_fraction: s.time_fraction,
            score_fraction: s.score_fraction,
        })
        .collect()
}

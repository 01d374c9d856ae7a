//! Builders for the three statement families: code runs, lecture viewer
//! access and feedback requests. Each `emit_*` records the statement and
//! returns it with `stored` filled in.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grading::{ExitStatus, GradeReport, Submission, Termination};
use crate::rational::Rational;
use crate::scaffold::FeedbackRequest;
use crate::timestamp::Timestamp;

use super::statement::{ActivityDefinition, Score, Statement, StatementResult};
use super::store::{Lrs, LrsError};
use super::vocab::vocabulary;

/// Per-test entry of the run event's `test_results` extension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test_case_id: String,
    pub passed: bool,
    pub termination: Termination,
    pub exit_status: Option<ExitStatus>,
    /// SHA-256 of the program's standard output.
    pub output_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewerAction {
    Opened,
    PageViewed,
    Closed,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record_and_fetch(lrs: &Lrs, stmt: Statement) -> Result<Statement, LrsError> {
    let id = lrs.record(stmt.clone())?;
    Ok(lrs.get(&id).unwrap_or(stmt))
}

pub fn run_statement(submission: &Submission, report: &GradeReport) -> Statement {
    let v = vocabulary();
    let mut s = Statement::new(
        submission.actor_id.clone(),
        v.verbs.attempted.verb(),
        v.exercise_iri(&submission.exercise_id),
        submission.submitted_at,
    );
    s.object.definition =
        Some(ActivityDefinition { name: submission.exercise_id.clone(), type_iri: Some(v.activity_types.exercise.clone()) });
    s.result = Some(StatementResult {
        score: Some(Score { raw: report.mark_awarded, min: Some(Rational::ZERO), max: Some(report.total_marks) }),
        success: Some(report.all_passed),
        response: Some(submission.source_code.clone()),
    });
    let records: Vec<TestRecord> = report
        .results
        .iter()
        .map(|r| TestRecord {
            test_case_id: r.test_case_id.clone(),
            passed: r.passed,
            termination: r.outcome.termination,
            exit_status: r.outcome.exit_status,
            output_sha256: sha256_hex(&r.outcome.stdout_data),
        })
        .collect();
    s.set_extension(&v.extensions.exercise_id, submission.exercise_id.as_str());
    s.set_extension(&v.extensions.submission_id, submission.id.as_str());
    s.set_extension(&v.extensions.source_sha256, sha256_hex(submission.source_code.as_bytes()));
    s.set_extension(
        &v.extensions.test_results,
        serde_json::to_string(&records).expect("test records serialize"),
    );
    s
}

/// Logs one graded run: code, per-test output digests and pass flags, score.
pub fn emit_run_event(lrs: &Lrs, submission: &Submission, report: &GradeReport) -> Result<Statement, LrsError> {
    record_and_fetch(lrs, run_statement(submission, report))
}

/// Parses the `test_results` extension of a run statement.
pub fn test_records(stmt: &Statement) -> Option<Vec<TestRecord>> {
    let text = stmt.extension(&vocabulary().extensions.test_results)?.as_text()?;
    serde_json::from_str(text).ok()
}

pub fn viewer_statement(actor_id: &str, material_id: &str, action: ViewerAction, page: Option<u32>, at: Timestamp) -> Statement {
    let v = vocabulary();
    let verb = match action {
        ViewerAction::Opened => &v.verbs.opened,
        ViewerAction::PageViewed => &v.verbs.page_viewed,
        ViewerAction::Closed => &v.verbs.closed,
    };
    let mut s = Statement::new(actor_id, verb.verb(), v.material_iri(material_id), at);
    s.object.definition = Some(ActivityDefinition { name: material_id.to_string(), type_iri: Some(v.activity_types.material.clone()) });
    s.set_extension(&v.extensions.material_id, material_id);
    if let Some(p) = page {
        s.set_extension(&v.extensions.page, i64::from(p));
    }
    s
}

/// Logs a lecture-viewer action. Session order is not enforced.
pub fn emit_viewer_event(
    lrs: &Lrs,
    actor_id: &str,
    material_id: &str,
    action: ViewerAction,
    page: Option<u32>,
    at: Timestamp,
) -> Result<Statement, LrsError> {
    record_and_fetch(lrs, viewer_statement(actor_id, material_id, action, page, at))
}

pub fn agent_statement(request: &FeedbackRequest, at: Timestamp) -> Statement {
    let v = vocabulary();
    let mut s = Statement::new(
        request.actor_id.clone(),
        v.verbs.requested_feedback.verb(),
        v.exercise_iri(&request.exercise_id),
        at,
    );
    s.object.definition =
        Some(ActivityDefinition { name: request.exercise_id.clone(), type_iri: Some(v.activity_types.exercise.clone()) });
    s.set_extension(&v.extensions.request_type, request.request_type.as_str());
    s.set_extension(&v.extensions.srl_phase, request.phase.as_str());
    s.set_extension(&v.extensions.exercise_id, request.exercise_id.as_str());
    s
}

/// Logs a feedback request: its type, SRL phase, exercise and time.
pub fn emit_agent_event(lrs: &Lrs, request: &FeedbackRequest, at: Timestamp) -> Result<Statement, LrsError> {
    record_and_fetch(lrs, agent_statement(request, at))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::{ExecutionOutcome, TestResult};
    use crate::scaffold::{RequestType, SrlPhase};
    use crate::xapi::LrsQuery;

    fn report(marks: &[(bool, i64)]) -> (Submission, GradeReport) {
        let sub = Submission {
            id: "sub-1".into(),
            exercise_id: "ex-1".into(),
            actor_id: "learner".into(),
            source_code: "print(1)".into(),
            submitted_at: Timestamp::from_millis(1_000),
        };
        let results = marks
            .iter()
            .enumerate()
            .map(|(i, (p, _))| TestResult {
                test_case_id: format!("t{i}"),
                outcome: ExecutionOutcome {
                    stdout_data: b"1\n".to_vec(),
                    stdout_truncated: false,
                    stderr_data: vec![],
                    stderr_truncated: false,
                    exit_status: Some(ExitStatus::Code(0)),
                    termination: Termination::Normal,
                    runtime_ms: 5,
                    cpu_ms: 4,
                },
                passed: *p,
                diff_hint: None,
                visibility: Default::default(),
            })
            .collect();
        let awarded: i64 = marks.iter().filter(|(p, _)| *p).map(|(_, m)| m).sum();
        let total: i64 = marks.iter().map(|(_, m)| m).sum();
        let r = GradeReport {
            submission_id: sub.id.clone(),
            exercise_id: sub.exercise_id.clone(),
            actor_id: sub.actor_id.clone(),
            results,
            mark_awarded: Rational::integer(awarded),
            total_marks: Rational::integer(total),
            mark_fraction: Rational::new(awarded, total),
            all_passed: marks.iter().all(|(p, _)| *p),
            diagnostic: None,
            graded_at: Timestamp::from_millis(2_000),
        };
        (sub, r)
    }

    #[test]
    fn run_event_maps_report_fields() {
        let lrs = Lrs::in_memory();
        let (sub, rep) = report(&[(true, 1), (true, 1), (true, 1)]);
        let s = emit_run_event(&lrs, &sub, &rep).unwrap();
        let res = s.result.as_ref().unwrap();
        assert_eq!(res.success, Some(true));
        assert_eq!(res.score.as_ref().unwrap().raw, Rational::integer(3));
        assert_eq!(res.response.as_deref(), Some("print(1)"));
        assert!(s.verb.iri.ends_with("/verbs/attempted"));
        assert_eq!(s.timestamp, sub.submitted_at);
        let recs = test_records(&s).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].output_sha256, sha256_hex(b"1\n"));
    }

    #[test]
    fn failing_and_partial_runs() {
        let lrs = Lrs::in_memory();
        let (sub, rep) = report(&[(false, 1), (false, 1)]);
        let s = emit_run_event(&lrs, &sub, &rep).unwrap();
        assert_eq!(s.result.as_ref().unwrap().success, Some(false));
        assert_eq!(s.result.as_ref().unwrap().score.as_ref().unwrap().raw, Rational::ZERO);

        let (mut sub, rep) = report(&[(true, 1), (false, 1), (true, 1), (false, 1)]);
        sub.id = "sub-2".into();
        let s = emit_run_event(&lrs, &sub, &rep).unwrap();
        assert_eq!(s.result.unwrap().score.unwrap().raw, rep.mark_awarded);
    }

    #[test]
    fn viewer_events() {
        let lrs = Lrs::in_memory();
        let s = emit_viewer_event(&lrs, "a", "week-1", ViewerAction::Opened, None, Timestamp::from_millis(5)).unwrap();
        assert_eq!(s.verb.display, "opened");
        // closing something never opened is still accepted
        emit_viewer_event(&lrs, "b", "week-2", ViewerAction::Closed, None, Timestamp::from_millis(1)).unwrap();
        assert_eq!(lrs.len(), 2);
    }

    #[test]
    fn agent_events_carry_request_fields() {
        let lrs = Lrs::in_memory();
        let req = FeedbackRequest::new("a", "ex-9", SrlPhase::ErrorCorrection, RequestType::ProgrammingSpecific, Timestamp::from_millis(77));
        let s1 = emit_agent_event(&lrs, &req, req.requested_at).unwrap();
        let s2 = emit_agent_event(&lrs, &req, req.requested_at).unwrap();
        assert_ne!(s1.id, s2.id);
        let v = vocabulary();
        assert_eq!(s1.extension(&v.extensions.srl_phase).unwrap().as_text(), Some("error_correction"));
        assert_eq!(s1.extension(&v.extensions.request_type).unwrap().as_text(), Some("programming_specific"));
        assert_eq!(s1.extension(&v.extensions.exercise_id).unwrap().as_text(), Some("ex-9"));
        assert_eq!(s1.timestamp, Timestamp::from_millis(77));

        emit_viewer_event(&lrs, "a", "m", ViewerAction::Opened, None, Timestamp::from_millis(1)).unwrap();
        let q = LrsQuery { verb_iri: Some(v.verbs.requested_feedback.iri.clone()), ..Default::default() };
        let got: Vec<_> = lrs.query(&q).unwrap().into_iter().map(|s| s.id).collect();
        let oracle: Vec<_> = lrs.all().into_iter().filter(|s| s.verb.iri == v.verbs.requested_feedback.iri).map(|s| s.id).collect();
        assert_eq!(got, oracle);
        assert_eq!(got.len(), 2);
    }
}

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use crate::rational::Rational;
use crate::timestamp::Timestamp;

use super::compare::{compare_output, diff_hint};
use super::sandbox::Sandbox;
use super::types::{
    tally_marks, ExecutionOutcome, Exercise, GradeReport, Limits, Submission, Termination, TestResult,
    DEFAULT_SOURCE_LIMIT,
};
use super::GradingError;

/// Grades submissions against exercises.
#[derive(Debug, Clone)]
pub struct Grader {
    sandbox: Sandbox,
    source_limit: usize,
}

impl Grader {
    pub fn new(sandbox: Sandbox) -> Self {
        Grader { sandbox, source_limit: DEFAULT_SOURCE_LIMIT }
    }

    pub fn with_source_limit(mut self, bytes: usize) -> Self {
        self.source_limit = bytes;
        self
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    pub fn source_limit(&self) -> usize {
        self.source_limit
    }

    /// Effective limits for an exercise: runner defaults with the exercise's
    /// overrides on top. Falls back to global defaults for unknown runners.
    pub fn limits_for(&self, exercise: &Exercise) -> Limits {
        let base = self.sandbox.runner(&exercise.language_tag).map(|r| r.limits()).unwrap_or_default();
        exercise.limits.apply(base)
    }

    pub fn check_source(&self, source: &str) -> Result<(), GradingError> {
        if source.len() > self.source_limit {
            return Err(GradingError::SourceTooLarge { size: source.len(), limit: self.source_limit });
        }
        Ok(())
    }

    /// Runs every test case in order and computes marks.
    ///
    /// A runner configuration problem does not fail the call: every test is
    /// reported as `runner_error`, the mark is zero and `diagnostic` says why.
    pub fn run_submission(
        &self,
        submission: &Submission,
        exercise: &Exercise,
        limits: &Limits,
    ) -> Result<GradeReport, GradingError> {
        if submission.exercise_id != exercise.id {
            return Err(GradingError::ExerciseMismatch {
                submission: submission.exercise_id.clone(),
                exercise: exercise.id.clone(),
            });
        }
        self.check_source(&submission.source_code)?;

        let mut diagnostic = None;
        let results: Vec<TestResult> = match self.sandbox.runner(&exercise.language_tag) {
            Err(e) => {
                let msg = e.to_string();
                diagnostic = Some(format!("sandbox configuration failure: {msg}"));
                exercise
                    .test_cases
                    .iter()
                    .map(|t| TestResult {
                        test_case_id: t.id.clone(),
                        outcome: ExecutionOutcome::runner_error(msg.clone()),
                        passed: false,
                        diff_hint: None,
                        visibility: t.visibility,
                    })
                    .collect()
            }
            Ok(_) => exercise
                .test_cases
                .iter()
                .map(|t| {
                    let outcome = self
                        .sandbox
                        .execute(&submission.source_code, &exercise.language_tag, &t.stdin_data, limits)
                        .unwrap_or_else(|e| ExecutionOutcome::runner_error(e.to_string()));
                    let normal = outcome.termination == Termination::Normal;
                    let matches = compare_output(&outcome.stdout_data, &t.expected_stdout, t.compare_mode);
                    let passed = normal && matches;
                    let diff_hint = if normal && !matches {
                        diff_hint(&outcome.stdout_data, &t.expected_stdout, t.compare_mode)
                    } else {
                        None
                    };
                    TestResult { test_case_id: t.id.clone(), outcome, passed, diff_hint, visibility: t.visibility }
                })
                .collect(),
        };

        Ok(build_report(submission, exercise, results, diagnostic))
    }
}

pub(crate) fn build_report(
    submission: &Submission,
    exercise: &Exercise,
    results: Vec<TestResult>,
    diagnostic: Option<String>,
) -> GradeReport {
    let passed: Vec<bool> = results.iter().map(|r| r.passed).collect();
    let mark_awarded = tally_marks(&exercise.test_cases, &passed);
    let total_marks = exercise.total_marks();
    let mark_fraction = mark_awarded.checked_div(total_marks).unwrap_or(Rational::ZERO);
    GradeReport {
        submission_id: submission.id.clone(),
        exercise_id: exercise.id.clone(),
        actor_id: submission.actor_id.clone(),
        all_passed: passed.iter().all(|p| *p),
        results,
        mark_awarded,
        total_marks,
        mark_fraction,
        diagnostic,
        graded_at: Timestamp::now(),
    }
}

/// Persisted grade reports keyed by submission id. Writes for one submission
/// id are serialized; distinct ids proceed in parallel.
#[derive(Debug, Default)]
pub struct ReportStore {
    dir: Option<PathBuf>,
    reports: RwLock<HashMap<String, Arc<GradeReport>>>,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ReportStore {
    pub fn in_memory() -> Self {
        ReportStore::default()
    }

    /// Opens (and loads) a directory of `<submission_id>.json` files.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GradingError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut reports = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let report: GradeReport = serde_json::from_str(&text)
                .map_err(|e| GradingError::Config(format!("{}: {e}", path.display())))?;
            reports.insert(report.submission_id.clone(), Arc::new(report));
        }
        Ok(ReportStore { dir: Some(dir), reports: RwLock::new(reports), write_locks: Mutex::default() })
    }

    pub fn save(&self, report: GradeReport) -> Result<Arc<GradeReport>, GradingError> {
        let lock = {
            let mut locks = self.write_locks.lock().unwrap_or_else(|p| p.into_inner());
            Arc::clone(locks.entry(report.submission_id.clone()).or_default())
        };
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(dir) = &self.dir {
            if !super::types::is_safe_id(&report.submission_id) {
                return Err(GradingError::Config(format!("unsafe submission id `{}`", report.submission_id)));
            }
            let tmp = dir.join(format!(".{}.tmp", report.submission_id));
            let body = serde_json::to_vec_pretty(&report).map_err(|e| GradingError::Config(e.to_string()))?;
            std::fs::write(&tmp, body)?;
            std::fs::rename(&tmp, dir.join(format!("{}.json", report.submission_id)))?;
        }
        let report = Arc::new(report);
        self.reports
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(report.submission_id.clone(), Arc::clone(&report));
        Ok(report)
    }

    pub fn get(&self, submission_id: &str) -> Option<Arc<GradeReport>> {
        self.reports.read().unwrap_or_else(|p| p.into_inner()).get(submission_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.reports.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::grading::Termination;
use crate::rational::Rational;
use crate::timestamp::Timestamp;
use crate::xapi::{test_records, vocabulary, Statement};

use super::anonymize::{strip_personal_data, AnonymizationPolicy};

pub const DEFAULT_SESSION_GAP_S: u64 = 1800;
/// Credit given to a session made of a single event.
pub const SINGLE_EVENT_FLOOR_S: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scope {
    Global,
    Exercise(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::Exercise(id) => write!(f, "exercise:{id}"),
        }
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "global" => Ok(Scope::Global),
            _ => s
                .strip_prefix("exercise:")
                .filter(|id| !id.is_empty())
                .map(|id| Scope::Exercise(id.to_string()))
                .ok_or_else(|| format!("invalid scope `{s}`")),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPattern {
    WrongOutput,
    Timeout,
    RuntimeError,
    RunnerError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorPatternCounts {
    pub wrong_output: u64,
    pub timeout: u64,
    pub runtime_error: u64,
    pub runner_error: u64,
}

impl ErrorPatternCounts {
    pub fn total(&self) -> u64 {
        self.wrong_output + self.timeout + self.runtime_error + self.runner_error
    }

    pub fn add(&mut self, p: ErrorPattern) {
        match p {
            ErrorPattern::WrongOutput => self.wrong_output += 1,
            ErrorPattern::Timeout => self.timeout += 1,
            ErrorPattern::RuntimeError => self.runtime_error += 1,
            ErrorPattern::RunnerError => self.runner_error += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Engagement {
    pub time_spent_s: u64,
    pub lecture_access_count: u64,
    pub attempt_count: u64,
    pub last_active: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Performance {
    pub attempts: u64,
    pub passed_attempts: u64,
    /// `None` when there were no attempts.
    pub success_rate: Option<Rational>,
    pub error_pattern_counts: ErrorPatternCounts,
}

/// Pseudonymized analytics for one learner in one scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerMetrics {
    pub actor_pseudonym: String,
    pub scope: Scope,
    pub time_spent_s: u64,
    pub attempt_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<Rational>,
    pub error_pattern_counts: ErrorPatternCounts,
    pub lecture_access_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_active: Option<Timestamp>,
}

impl LearnerMetrics {
    /// The metric export document (TOML).
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }

    pub fn from_document(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn is_empty(&self) -> bool {
        self.attempt_count == 0 && self.lecture_access_count == 0 && self.time_spent_s == 0
    }
}

pub fn is_run_event(s: &Statement) -> bool {
    s.verb.iri == vocabulary().verbs.attempted.iri
}

pub fn is_viewer_event(s: &Statement) -> bool {
    vocabulary().is_viewer_verb(&s.verb.iri)
}

fn run_exercise_matches(s: &Statement, exercise_id: &str) -> bool {
    let v = vocabulary();
    match s.extension(&v.extensions.exercise_id).and_then(|e| e.as_text()) {
        Some(id) => id == exercise_id,
        None => s.object.iri == v.exercise_iri(exercise_id),
    }
}

fn run_succeeded(s: &Statement) -> bool {
    s.result.as_ref().and_then(|r| r.success) == Some(true)
}

/// One class per failed run, from the per-test records: a runner problem
/// outranks a timeout, which outranks a crash, which outranks wrong output.
pub fn classify_run(s: &Statement) -> Option<ErrorPattern> {
    if run_succeeded(s) {
        return None;
    }
    let records = test_records(s)?;
    if records.iter().any(|r| r.termination == Termination::RunnerError) {
        Some(ErrorPattern::RunnerError)
    } else if records.iter().any(|r| r.termination == Termination::Timeout) {
        Some(ErrorPattern::Timeout)
    } else if records.iter().any(|r| {
        r.termination == Termination::MemoryExceeded
            || (r.termination == Termination::Normal && !r.exit_status.is_some_and(|e| e.success()))
    }) {
        Some(ErrorPattern::RuntimeError)
    } else if records.iter().any(|r| !r.passed) {
        Some(ErrorPattern::WrongOutput)
    } else {
        None
    }
}

/// Session-based time on task plus viewer and run counts for `actor_id`.
///
/// Viewer and run events are sorted by timestamp; neighbours at most
/// `session_gap_s` apart share a session. A session contributes
/// `last - first`, or [`SINGLE_EVENT_FLOOR_S`] when it has one event. The
/// millisecond total is floored to whole seconds.
pub fn compute_engagement(statements: &[Statement], actor_id: &str, session_gap_s: u64) -> Engagement {
    let mut times: Vec<i64> = Vec::new();
    let mut e = Engagement::default();
    for s in statements.iter().filter(|s| s.actor.account_id == actor_id) {
        if is_viewer_event(s) {
            e.lecture_access_count += 1;
        } else if is_run_event(s) {
            e.attempt_count += 1;
        } else {
            continue;
        }
        times.push(s.timestamp.as_millis());
    }
    times.sort_unstable();
    e.last_active = times.last().map(|t| Timestamp::from_millis(*t));

    let gap_ms = i64::try_from(session_gap_s.saturating_mul(1000)).unwrap_or(i64::MAX);
    let mut total_ms: i64 = 0;
    let mut i = 0;
    while i < times.len() {
        let start = times[i];
        let mut j = i;
        while j + 1 < times.len() && times[j + 1] - times[j] <= gap_ms {
            j += 1;
        }
        total_ms += if j == i { SINGLE_EVENT_FLOOR_S as i64 * 1000 } else { times[j] - start };
        i = j + 1;
    }
    e.time_spent_s = (total_ms / 1000) as u64;
    e
}

/// Success rate and error-pattern counts over run events, optionally
/// restricted to one exercise.
pub fn compute_performance(statements: &[Statement], actor_id: &str, exercise_id: Option<&str>) -> Performance {
    let mut p = Performance::default();
    for s in statements.iter().filter(|s| s.actor.account_id == actor_id && is_run_event(s)) {
        if exercise_id.is_some_and(|id| !run_exercise_matches(s, id)) {
            continue;
        }
        p.attempts += 1;
        if run_succeeded(s) {
            p.passed_attempts += 1;
        } else if let Some(pattern) = classify_run(s) {
            p.error_pattern_counts.add(pattern);
        }
    }
    p.success_rate = (p.attempts > 0).then(|| Rational::new(p.passed_attempts as i64, p.attempts as i64));
    p
}

/// Full metrics for one learner. Personal fields are stripped first; the
/// actor appears only as a pseudonym. In exercise scope, run events of
/// other exercises are ignored while lecture access stays course-wide.
pub fn compute_metrics(
    statements: &[Statement],
    actor_id: &str,
    scope: &Scope,
    policy: &AnonymizationPolicy,
    session_gap_s: u64,
) -> LearnerMetrics {
    let cleaned: Vec<Statement> = statements
        .iter()
        .filter(|s| s.actor.account_id == actor_id)
        .filter(|s| match scope {
            Scope::Global => true,
            Scope::Exercise(id) => !is_run_event(s) || run_exercise_matches(s, id),
        })
        .map(strip_personal_data)
        .collect();
    let engagement = compute_engagement(&cleaned, actor_id, session_gap_s);
    let exercise = match scope {
        Scope::Global => None,
        Scope::Exercise(id) => Some(id.as_str()),
    };
    let performance = compute_performance(&cleaned, actor_id, exercise);
    LearnerMetrics {
        actor_pseudonym: policy.pseudonym(actor_id),
        scope: scope.clone(),
        time_spent_s: engagement.time_spent_s,
        attempt_count: engagement.attempt_count,
        success_rate: performance.success_rate,
        error_pattern_counts: performance.error_pattern_counts,
        lecture_access_count: engagement.lecture_access_count,
        last_active: engagement.last_active,
    }
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;
use crate::timestamp::Timestamp;
use crate::validation::FieldErrors;

/// Default cap on submitted source size.
pub const DEFAULT_SOURCE_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Visible,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    Exact,
    TrimTrailing,
    #[default]
    TrimLines,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    #[serde(with = "crate::bytes_text", default)]
    pub stdin_data: Vec<u8>,
    #[serde(with = "crate::bytes_text")]
    pub expected_stdout: Vec<u8>,
    pub marks: Rational,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default)]
    pub compare_mode: CompareMode,
}

impl TestCase {
    pub fn is_hidden(&self) -> bool {
        self.visibility == Visibility::Hidden
    }
}

/// Resource limits for one program run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_ms: u64,
    pub cpu_ms: u64,
    pub memory_bytes: u64,
    #[serde(default = "default_output_cap")]
    pub output_cap_bytes: usize,
}

fn default_output_cap() -> usize {
    64 * 1024
}

impl Default for Limits {
    fn default() -> Self {
        Limits { wall_ms: 5_000, cpu_ms: 3_000, memory_bytes: 256 * 1024 * 1024, output_cap_bytes: default_output_cap() }
    }
}

/// Partial limits, layered over a runner's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LimitOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_cap_bytes: Option<usize>,
}

impl LimitOverrides {
    pub fn is_empty(&self) -> bool {
        *self == LimitOverrides::default()
    }

    pub fn apply(&self, base: Limits) -> Limits {
        Limits {
            wall_ms: self.wall_ms.unwrap_or(base.wall_ms),
            cpu_ms: self.cpu_ms.unwrap_or(base.cpu_ms),
            memory_bytes: self.memory_bytes.unwrap_or(base.memory_bytes),
            output_cap_bytes: self.output_cap_bytes.unwrap_or(base.output_cap_bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub title: String,
    pub statement: String,
    pub language_tag: String,
    pub test_cases: Vec<TestCase>,
    #[serde(default)]
    pub concept_tags: Vec<String>,
    pub difficulty: u32,
    #[serde(default, skip_serializing_if = "LimitOverrides::is_empty")]
    pub limits: LimitOverrides,
}

impl Exercise {
    pub fn total_marks(&self) -> Rational {
        self.test_cases.iter().map(|t| t.marks).sum()
    }

    pub fn validate(&self) -> Result<(), FieldErrors> {
        let mut errs = FieldErrors::default();
        if self.id.trim().is_empty() {
            errs.push("id", "must not be empty");
        } else if !is_safe_id(&self.id) {
            errs.push("id", "may only contain letters, digits, '-', '_' and '.'");
        }
        if self.title.trim().is_empty() {
            errs.push("title", "must not be empty");
        }
        if self.language_tag.trim().is_empty() {
            errs.push("language_tag", "must not be empty");
        }
        if self.test_cases.is_empty() {
            errs.push("test_cases", "at least one test case is required");
        }
        let mut seen = HashSet::new();
        for (i, t) in self.test_cases.iter().enumerate() {
            if t.id.trim().is_empty() {
                errs.push(format!("test_cases[{i}].id"), "must not be empty");
            } else if !seen.insert(t.id.as_str()) {
                errs.push(format!("test_cases[{i}].id"), format!("duplicate test id `{}`", t.id));
            }
            if t.marks.is_negative() {
                errs.push(format!("test_cases[{i}].marks"), "must be >= 0");
            }
        }
        if !self.test_cases.is_empty() && !self.test_cases.iter().any(|t| t.marks > Rational::ZERO) {
            errs.push("test_cases", "at least one test case must carry positive marks");
        }
        errs.into_result()
    }
}

/// Identifiers that double as directory names.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub exercise_id: String,
    pub actor_id: String,
    pub source_code: String,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Normal,
    Timeout,
    MemoryExceeded,
    RunnerError,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Normal => "normal",
            Termination::Timeout => "timeout",
            Termination::MemoryExceeded => "memory_exceeded",
            Termination::RunnerError => "runner_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Code(i32),
    Signal(i32),
}

impl ExitStatus {
    pub fn success(&self) -> bool {
        matches!(self, ExitStatus::Code(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    #[serde(with = "crate::bytes_text")]
    pub stdout_data: Vec<u8>,
    pub stdout_truncated: bool,
    #[serde(with = "crate::bytes_text")]
    pub stderr_data: Vec<u8>,
    pub stderr_truncated: bool,
    /// Absent when the program never started.
    pub exit_status: Option<ExitStatus>,
    pub termination: Termination,
    /// Wall-clock time from spawn to exit or kill.
    pub runtime_ms: u64,
    /// User + system CPU time of the reaped process.
    pub cpu_ms: u64,
}

impl ExecutionOutcome {
    pub fn runner_error(message: impl Into<String>) -> Self {
        ExecutionOutcome {
            stdout_data: Vec::new(),
            stdout_truncated: false,
            stderr_data: message.into().into_bytes(),
            stderr_truncated: false,
            exit_status: None,
            termination: Termination::RunnerError,
            runtime_ms: 0,
            cpu_ms: 0,
        }
    }

    /// Non-zero exit or death by signal under normal termination.
    pub fn crashed(&self) -> bool {
        self.termination == Termination::Normal && !self.exit_status.map(|s| s.success()).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_case_id: String,
    pub outcome: ExecutionOutcome,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_hint: Option<String>,
    #[serde(default)]
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeReport {
    pub submission_id: String,
    pub exercise_id: String,
    pub actor_id: String,
    pub results: Vec<TestResult>,
    pub mark_awarded: Rational,
    pub total_marks: Rational,
    pub mark_fraction: Rational,
    pub all_passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub graded_at: Timestamp,
}

impl GradeReport {
    /// Copy safe to show a learner: hidden tests keep only their verdict,
    /// termination and timing.
    pub fn learner_view(&self) -> GradeReport {
        let mut r = self.clone();
        for t in r.results.iter_mut().filter(|t| t.visibility == Visibility::Hidden) {
            t.diff_hint = None;
            t.outcome.stdout_data.clear();
            t.outcome.stderr_data.clear();
            t.outcome.stdout_truncated = false;
            t.outcome.stderr_truncated = false;
        }
        r
    }

    pub fn failing_test_ids(&self) -> Vec<&str> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.test_case_id.as_str()).collect()
    }
}

/// Sum of marks over passed tests. `passed[i]` pairs with `tests[i]`.
pub fn tally_marks(tests: &[TestCase], passed: &[bool]) -> Rational {
    tests.iter().zip(passed).filter(|(_, p)| **p).map(|(t, _)| t.marks).sum()
}

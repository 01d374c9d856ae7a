use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grading::{GradeReport, Termination, TestResult, Visibility};
use crate::lace::truncate_chars;

use super::redact::{redact_solution, CommentRules, RedactionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionLabel {
    QuestionStatement,
    StudentAnswer,
    ExecutionResults,
    LectureContext,
    AnalyticsSummary,
    PhaseDirective,
}

impl SectionLabel {
    /// Section order inside every bundle.
    pub const ORDER: [SectionLabel; 6] = [
        SectionLabel::QuestionStatement,
        SectionLabel::StudentAnswer,
        SectionLabel::ExecutionResults,
        SectionLabel::LectureContext,
        SectionLabel::AnalyticsSummary,
        SectionLabel::PhaseDirective,
    ];

    /// Sections shortened first when the prompt exceeds its budget. The
    /// phase directive is never shortened.
    pub const TRUNCATION_ORDER: [SectionLabel; 5] = [
        SectionLabel::LectureContext,
        SectionLabel::AnalyticsSummary,
        SectionLabel::ExecutionResults,
        SectionLabel::StudentAnswer,
        SectionLabel::QuestionStatement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionLabel::QuestionStatement => "question_statement",
            SectionLabel::StudentAnswer => "student_answer",
            SectionLabel::ExecutionResults => "execution_results",
            SectionLabel::LectureContext => "lecture_context",
            SectionLabel::AnalyticsSummary => "analytics_summary",
            SectionLabel::PhaseDirective => "phase_directive",
        }
    }

    fn empty_marker(self) -> &'static str {
        match self {
            SectionLabel::QuestionStatement => "[empty] no question statement",
            SectionLabel::StudentAnswer => "[empty] no code submitted yet",
            SectionLabel::ExecutionResults => "[empty] the code has not been run against the tests yet",
            SectionLabel::LectureContext => "[empty] no related lecture material found",
            SectionLabel::AnalyticsSummary => "[empty] no learning activity recorded",
            SectionLabel::PhaseDirective => "[empty] no directive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub label: SectionLabel,
    pub text: String,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_directive: String,
    pub sections: Vec<PromptSection>,
    pub guardrail_directives: Vec<String>,
}

pub const SYSTEM_DIRECTIVE: &str = "You are a programming tutor that supports self-regulated learning. \
Answer the learner's request using the labeled context sections, follow the phase directive, \
keep the reply short and encouraging, and prefer questions and hints over answers.";

pub const NEVER_REVEAL_SOLUTION: &str =
    "Never reveal the reference solution or write a complete or corrected program for the exercise.";

pub const GUARDRAILS: [&str; 3] = [
    NEVER_REVEAL_SOLUTION,
    "Do not disclose hidden test inputs or expected outputs.",
    "Stay within the topic of the current exercise and course.",
];

pub const TRUNCATION_MARKER: &str = "\n[truncated]";

impl PromptBundle {
    pub fn section(&self, label: SectionLabel) -> Option<&str> {
        self.sections.iter().find(|s| s.label == label).map(|s| s.text.as_str())
    }

    pub fn labels(&self) -> Vec<SectionLabel> {
        self.sections.iter().map(|s| s.label).collect()
    }

    /// Plain-text rendering used for the character budget and by clients
    /// that take a single user message.
    pub fn render_sections(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = write!(out, "### {}\n{}\n\n", s.label.as_str(), s.text);
        }
        out
    }

    pub fn render_system(&self) -> String {
        let mut out = self.system_directive.clone();
        for g in &self.guardrail_directives {
            out.push_str("\n- ");
            out.push_str(g);
        }
        out
    }

    pub fn char_len(&self) -> usize {
        self.render_system().chars().count() + self.render_sections().chars().count()
    }
}

/// Raw section material before redaction and budgeting. `None` or blank
/// text yields the section's empty marker.
#[derive(Debug, Clone, Default)]
pub struct PromptParts {
    pub question_statement: Option<String>,
    pub student_answer: Option<String>,
    pub execution_results: Option<String>,
    pub lecture_context: Option<String>,
    pub analytics_summary: Option<String>,
    pub phase_directive: String,
}

impl PromptParts {
    fn text(&self, label: SectionLabel) -> Option<&str> {
        match label {
            SectionLabel::QuestionStatement => self.question_statement.as_deref(),
            SectionLabel::StudentAnswer => self.student_answer.as_deref(),
            SectionLabel::ExecutionResults => self.execution_results.as_deref(),
            SectionLabel::LectureContext => self.lecture_context.as_deref(),
            SectionLabel::AnalyticsSummary => self.analytics_summary.as_deref(),
            SectionLabel::PhaseDirective => Some(self.phase_directive.as_str()),
        }
    }
}

/// Builds the six sections in order, redacts every section against the
/// reference solution and shortens sections to fit `char_budget`.
pub fn build_bundle(
    parts: &PromptParts,
    reference_solution: &str,
    threshold: usize,
    rules: &CommentRules,
    char_budget: usize,
) -> (PromptBundle, RedactionReport) {
    let mut report = RedactionReport::default();
    let sections = SectionLabel::ORDER
        .iter()
        .map(|&label| {
            let text = match parts.text(label).filter(|t| !t.trim().is_empty()) {
                Some(t) => {
                    let r = redact_solution(t, reference_solution, threshold, rules);
                    report.merge(r.report);
                    r.text
                }
                None => label.empty_marker().to_string(),
            };
            PromptSection { label, text, truncated: false }
        })
        .collect();
    let mut bundle = PromptBundle {
        system_directive: SYSTEM_DIRECTIVE.to_string(),
        sections,
        guardrail_directives: GUARDRAILS.iter().map(|s| s.to_string()).collect(),
    };
    fit_budget(&mut bundle, char_budget);
    (bundle, report)
}

fn fit_budget(bundle: &mut PromptBundle, budget: usize) {
    let marker_len = TRUNCATION_MARKER.chars().count();
    for label in SectionLabel::TRUNCATION_ORDER {
        let total = bundle.char_len();
        if total <= budget {
            return;
        }
        let excess = total - budget;
        let Some(section) = bundle.sections.iter_mut().find(|s| s.label == label) else { continue };
        let len = section.text.chars().count();
        let keep = len.saturating_sub(excess + marker_len);
        if keep >= len {
            continue;
        }
        let mut text: String = section.text.chars().take(keep).collect();
        text.push_str(TRUNCATION_MARKER);
        section.text = text;
        section.truncated = true;
    }
}

fn describe_failure(r: &TestResult) -> String {
    let o = &r.outcome;
    match o.termination {
        Termination::Timeout => "timed out".into(),
        Termination::MemoryExceeded => "exceeded the memory limit".into(),
        Termination::RunnerError => "could not be run".into(),
        Termination::Normal => match &o.exit_status {
            Some(s) if !s.success() => format!("crashed ({})", exit_text(s)),
            _ => "wrong output".into(),
        },
    }
}

fn exit_text(s: &crate::grading::ExitStatus) -> String {
    match s {
        crate::grading::ExitStatus::Code(c) => format!("exit code {c}"),
        crate::grading::ExitStatus::Signal(n) => format!("signal {n}"),
    }
}

const STDERR_EXCERPT_CHARS: usize = 400;

/// Per-test verdicts. Hidden tests show only pass or fail and the kind of
/// failure; diff hints and error output come from visible tests only.
pub fn render_execution_results(report: &GradeReport) -> String {
    let mut out = String::new();
    let passed = report.results.iter().filter(|r| r.passed).count();
    let _ = writeln!(
        out,
        "Marks: {} of {}. Tests passed: {passed} of {}.",
        report.mark_awarded,
        report.total_marks,
        report.results.len()
    );
    if let Some(d) = &report.diagnostic {
        let _ = writeln!(out, "Note: {d}");
    }
    for r in &report.results {
        let vis = match r.visibility {
            Visibility::Visible => "visible",
            Visibility::Hidden => "hidden",
        };
        if r.passed {
            let _ = writeln!(out, "- {} ({vis}): passed", r.test_case_id);
            continue;
        }
        let _ = write!(out, "- {} ({vis}): failed, {}", r.test_case_id, describe_failure(r));
        if r.visibility == Visibility::Visible {
            if let Some(h) = &r.diff_hint {
                let _ = write!(out, "; {h}");
            }
            let stderr = String::from_utf8_lossy(&r.outcome.stderr_data);
            if !stderr.trim().is_empty() {
                let _ = write!(out, "\n  error output: {}", truncate_chars(stderr.trim(), STDERR_EXCERPT_CHARS));
            }
        }
        out.push('\n');
    }
    let failing = report.failing_test_ids();
    if !failing.is_empty() {
        let _ = writeln!(out, "Failing tests: {}", failing.join(", "));
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts() -> PromptParts {
        PromptParts {
            question_statement: Some("Print the sum of two integers.".into()),
            student_answer: Some("a, b = input().split()\nprint(a + b)".into()),
            execution_results: None,
            lecture_context: Some("lecture text ".repeat(200)),
            analytics_summary: None,
            phase_directive: "Plan step-by-step.".into(),
        }
    }

    #[test]
    fn sections_in_fixed_order_with_empty_markers() {
        let (b, _) = build_bundle(&parts(), "print(int(a)+int(b))", 8, &CommentRules::python(), 100_000);
        assert_eq!(b.labels(), SectionLabel::ORDER);
        assert!(b.section(SectionLabel::ExecutionResults).unwrap().starts_with("[empty]"));
        assert!(b.section(SectionLabel::AnalyticsSummary).unwrap().starts_with("[empty]"));
        assert!(b.guardrail_directives.iter().any(|g| g == NEVER_REVEAL_SOLUTION));
    }

    #[test]
    fn budget_cuts_lecture_context_first() {
        let (b, _) = build_bundle(&parts(), "print(int(a)+int(b))", 8, &CommentRules::python(), 1500);
        assert!(b.char_len() <= 1500);
        let lc = b.sections.iter().find(|s| s.label == SectionLabel::LectureContext).unwrap();
        assert!(lc.truncated && lc.text.ends_with(TRUNCATION_MARKER));
        let qs = b.sections.iter().find(|s| s.label == SectionLabel::QuestionStatement).unwrap();
        assert!(!qs.truncated);
        assert_eq!(b.section(SectionLabel::PhaseDirective), Some("Plan step-by-step."));
    }

    #[test]
    fn tiny_budget_never_touches_directive() {
        let (b, _) = build_bundle(&parts(), "x", 8, &CommentRules::python(), 10);
        assert_eq!(b.section(SectionLabel::PhaseDirective), Some("Plan step-by-step."));
        assert!(b.sections.iter().filter(|s| s.label != SectionLabel::PhaseDirective).all(|s| s.truncated));
    }

    #[test]
    fn solution_in_student_answer_is_redacted() {
        let sol = "a, b = map(int, input().split())\nprint(a + b)";
        let mut p = parts();
        p.student_answer = Some(sol.into());
        let (b, rep) = build_bundle(&p, sol, 8, &CommentRules::python(), 100_000);
        assert!(rep.redacted);
        assert!(!b.render_sections().contains(sol));
    }
}

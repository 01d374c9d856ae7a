use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::grading::{GradeReport, RunnerRegistry, DEFAULT_SOURCE_LIMIT};
use crate::kce::{KceError, KnowledgeBase};
use crate::lace::{compute_metrics, context_summary, AnonymizationPolicy, Scope, DEFAULT_SUMMARY_CHARS};
use crate::timestamp::Timestamp;
use crate::xapi::{emit_agent_event, Lrs, LrsError, LrsQuery};

use super::client::{GenerationParams, LlmClient};
use super::directives::DirectiveTable;
use super::phase::{RequestType, SrlPhase};
use super::prompt::{build_bundle, render_execution_results, PromptBundle, PromptParts};
use super::redact::{redact_solution, CommentRules, RedactionReport, DEFAULT_REDACTION_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub actor_id: String,
    pub exercise_id: String,
    pub phase: SrlPhase,
    pub request_type: RequestType,
    #[serde(default)]
    pub code_snapshot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_report: Option<GradeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
    pub requested_at: Timestamp,
}

impl FeedbackRequest {
    pub fn new(
        actor_id: impl Into<String>,
        exercise_id: impl Into<String>,
        phase: SrlPhase,
        request_type: RequestType,
        requested_at: Timestamp,
    ) -> Self {
        FeedbackRequest {
            actor_id: actor_id.into(),
            exercise_id: exercise_id.into(),
            phase,
            request_type,
            code_snapshot: String::new(),
            latest_report: None,
            free_text: None,
            requested_at,
        }
    }

    pub fn with_code(mut self, code: impl Into<String>) -> Self {
        self.code_snapshot = code.into();
        self
    }

    pub fn with_report(mut self, report: GradeReport) -> Self {
        self.latest_report = Some(report);
        self
    }

    pub fn with_question(mut self, text: impl Into<String>) -> Self {
        self.free_text = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub text: String,
    pub phase: SrlPhase,
    pub request_type: RequestType,
    pub strategy_tags: Vec<String>,
    /// Redaction applied to the model reply.
    pub redaction_report: RedactionReport,
    pub fallback_used: bool,
    /// Id of the logged feedback-request statement.
    pub event_id: Uuid,
}

#[derive(Debug, thiserror::Error)]
pub enum ScaffoldError {
    #[error("unknown exercise {0}")]
    UnknownExercise(String),
    #[error("code snapshot is {size} bytes, limit is {limit}")]
    SourceTooLarge { size: usize, limit: usize },
    #[error("report {report} belongs to exercise {report_exercise}, not {exercise}")]
    ReportMismatch { report: String, report_exercise: String, exercise: String },
    #[error(transparent)]
    Knowledge(#[from] KceError),
    #[error(transparent)]
    Lrs(#[from] LrsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TutorSettings {
    pub retrieval_k: usize,
    pub session_gap_s: u64,
    pub redaction_threshold: usize,
    pub prompt_char_budget: usize,
    pub summary_chars: usize,
    pub source_limit: usize,
    pub generation: GenerationParams,
}

impl Default for TutorSettings {
    fn default() -> Self {
        TutorSettings {
            retrieval_k: 5,
            session_gap_s: crate::lace::DEFAULT_SESSION_GAP_S,
            redaction_threshold: DEFAULT_REDACTION_THRESHOLD,
            prompt_char_budget: 6000,
            summary_chars: DEFAULT_SUMMARY_CHARS,
            source_limit: DEFAULT_SOURCE_LIMIT,
            generation: GenerationParams::default(),
        }
    }
}

/// Everything a feedback request reads from.
pub struct Tutor<'a> {
    pub knowledge: &'a KnowledgeBase,
    pub lrs: &'a Lrs,
    pub policy: &'a AnonymizationPolicy,
    pub directives: &'a DirectiveTable,
    pub runners: &'a RunnerRegistry,
    pub settings: TutorSettings,
}

impl Tutor<'_> {
    fn comment_rules(&self, language_tag: &str) -> CommentRules {
        self.runners.get(language_tag).map(CommentRules::from_runner).unwrap_or_default()
    }

    fn check(&self, req: &FeedbackRequest) -> Result<(), ScaffoldError> {
        if req.code_snapshot.len() > self.settings.source_limit {
            return Err(ScaffoldError::SourceTooLarge { size: req.code_snapshot.len(), limit: self.settings.source_limit });
        }
        if let Some(r) = &req.latest_report {
            if r.exercise_id != req.exercise_id {
                return Err(ScaffoldError::ReportMismatch {
                    report: r.submission_id.clone(),
                    report_exercise: r.exercise_id.clone(),
                    exercise: req.exercise_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// The labeled prompt for a request, redacted against the exercise's
    /// reference solution and fitted to the character budget.
    pub fn assemble_prompt(&self, req: &FeedbackRequest) -> Result<(PromptBundle, RedactionReport), ScaffoldError> {
        self.check(req)?;
        let ek = self
            .knowledge
            .exercise(&req.exercise_id)
            .ok_or_else(|| ScaffoldError::UnknownExercise(req.exercise_id.clone()))?;

        let mut query = ek.statement.clone();
        if let Some(q) = &req.free_text {
            query.push('\n');
            query.push_str(q);
        }
        let all = self.knowledge.retrieve(&query, Some(&ek.exercise_id), self.knowledge.chunk_count().max(1))?;
        let mut lecture = String::new();
        let locations: Vec<String> = self
            .knowledge
            .exercise_locations(&ek.exercise_id)?
            .iter()
            .filter(|l| !l.is_empty())
            .map(|l| l.describe())
            .collect();
        if !locations.is_empty() {
            let _ = writeln!(lecture, "Where to look in the lecture materials: {}", locations.join("; "));
        }
        for hit in all.hits.iter().filter(|h| !h.contains_solution).take(self.settings.retrieval_k) {
            if let Some(c) = self.knowledge.chunk(&hit.chunk_id) {
                let _ = writeln!(lecture, "[{}]\n{}\n", c.id, c.text);
            }
        }

        let statements = self.lrs.query(&LrsQuery::actor(&req.actor_id))?;
        let metrics = compute_metrics(
            &statements,
            &req.actor_id,
            &Scope::Exercise(ek.exercise_id.clone()),
            self.policy,
            self.settings.session_gap_s,
        );
        let analytics = (!metrics.is_empty()).then(|| context_summary(&metrics, self.settings.summary_chars));

        let parts = PromptParts {
            question_statement: Some(ek.statement.clone()),
            student_answer: Some(req.code_snapshot.clone()),
            execution_results: req.latest_report.as_ref().map(render_execution_results),
            lecture_context: Some(lecture),
            analytics_summary: analytics,
            phase_directive: self.directives.row(req.phase, req.request_type).directive_text.clone(),
        };
        Ok(build_bundle(
            &parts,
            &ek.reference_solution,
            self.settings.redaction_threshold,
            &self.comment_rules(&ek.language_tag),
            self.settings.prompt_char_budget,
        ))
    }

    /// Assembles the prompt, logs the request, asks the client and redacts
    /// the reply. A failing or empty reply falls back to the phase's static
    /// strategy hint.
    pub fn generate_feedback(
        &self,
        client: &dyn LlmClient,
        req: &FeedbackRequest,
    ) -> Result<FeedbackResponse, ScaffoldError> {
        let (bundle, _) = self.assemble_prompt(req)?;
        let ek = self.knowledge.exercise(&req.exercise_id).ok_or_else(|| ScaffoldError::UnknownExercise(req.exercise_id.clone()))?;
        let event = emit_agent_event(self.lrs, req, req.requested_at)?;

        let rules = self.comment_rules(&ek.language_tag);
        let row = self.directives.row(req.phase, req.request_type);
        let reply = match client.generate(&bundle, &self.settings.generation) {
            Ok(text) => {
                let r = redact_solution(&text, &ek.reference_solution, self.settings.redaction_threshold, &rules);
                let text = crate::lace::truncate_chars(&r.text, self.settings.generation.max_reply_chars);
                (!text.trim().is_empty()).then_some((text, r.report))
            }
            Err(e) => {
                tracing::warn!(error = %e, exercise = %req.exercise_id, "feedback falls back to static hint");
                None
            }
        };
        let (text, redaction_report, fallback_used) = match reply {
            Some((text, report)) => (text, report, false),
            None => (self.directives.fallback_hint(req.phase).to_string(), RedactionReport::default(), true),
        };
        Ok(FeedbackResponse {
            text,
            phase: req.phase,
            request_type: req.request_type,
            strategy_tags: row.strategy_tags.clone(),
            redaction_report,
            fallback_used,
            event_id: event.id,
        })
    }
}

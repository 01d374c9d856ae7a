//! Self-regulated learning scaffolding: phase directives, prompt assembly,
//! solution redaction and the language-model boundary.

mod client;
mod directives;
mod feedback;
mod phase;
mod prompt;
mod redact;

pub use client::{DisabledClient, GenerationParams, LlmClient, LlmError, MockClient, ScriptedClient};
pub use directives::{phase_directive, DirectiveRow, DirectiveTable, PhaseInfo};
pub use feedback::{FeedbackRequest, FeedbackResponse, ScaffoldError, Tutor, TutorSettings};
pub use phase::{RequestType, SrlPhase, UnknownVariant};
pub use prompt::{
    build_bundle, render_execution_results, PromptBundle, PromptParts, PromptSection, SectionLabel, GUARDRAILS,
    NEVER_REVEAL_SOLUTION, SYSTEM_DIRECTIVE, TRUNCATION_MARKER,
};
pub use redact::{
    longest_common_run, redact_solution, CommentRules, Redaction, RedactionReport, DEFAULT_REDACTION_THRESHOLD,
    MIN_REDACTION_THRESHOLD, REDACTION_MARKER,
};

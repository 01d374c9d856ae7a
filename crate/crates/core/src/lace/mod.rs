//! Learning analytics context: pseudonymized engagement and performance
//! metrics derived from the record store, and their prompt summary.

mod anonymize;
mod metrics;
mod summary;

pub use anonymize::{anonymize, strip_personal_data, AnonymizationPolicy, DROPPED_FIELDS};
pub use metrics::{
    classify_run, compute_engagement, compute_metrics, compute_performance, is_run_event, is_viewer_event, Engagement,
    ErrorPattern, ErrorPatternCounts, LearnerMetrics, Performance, Scope, DEFAULT_SESSION_GAP_S, SINGLE_EVENT_FLOOR_S,
};
pub use summary::{context_summary, truncate_chars, DEFAULT_SUMMARY_CHARS, NO_ACTIVITY};

#[derive(Debug, thiserror::Error)]
pub enum LaceError {
    #[error("anonymization key must not be empty")]
    EmptyKey,
}

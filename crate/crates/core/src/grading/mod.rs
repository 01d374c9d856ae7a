//! Sandboxed execution of submitted programs and test-case grading.

mod compare;
mod engine;
pub mod isolation;
mod runner;
mod sandbox;
mod types;

pub use compare::{compare_output, diff_hint};
pub use engine::{Grader, ReportStore};
pub use runner::{RunnerRegistry, RunnerSpec};
pub use sandbox::{IsolationMode, Sandbox};
pub use types::*;

#[derive(Debug, thiserror::Error)]
pub enum GradingError {
    #[error("unknown language tag `{0}`")]
    UnknownLanguage(String),
    #[error("runner configuration: {0}")]
    Config(String),
    #[error("source is {size} bytes, limit is {limit}")]
    SourceTooLarge { size: usize, limit: usize },
    #[error("submission targets exercise `{submission}` but `{exercise}` was given")]
    ExerciseMismatch { submission: String, exercise: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Programming-course tutoring engine: sandboxed grading, an embedded
//! learning record store for xAPI statements, learner analytics, a lecture
//! and exercise knowledge base, and phase-specific self-regulated learning
//! feedback behind a guarded language-model interface.

pub mod bundle;
pub mod bytes_text;
pub mod config;
pub mod grading;
pub mod kce;
pub mod lace;
pub mod rational;
pub mod scaffold;
pub mod timestamp;
pub mod validation;
pub mod xapi;

pub use rational::Rational;
pub use timestamp::Timestamp;

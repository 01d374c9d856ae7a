//! xAPI statements: validation, the embedded record store, and emitters.

mod emit;
pub mod iri;
mod statement;
mod store;
mod vocab;

pub use emit::{
    agent_statement, emit_agent_event, emit_run_event, emit_viewer_event, run_statement, sha256_hex, test_records,
    viewer_statement, TestRecord, ViewerAction,
};
pub use statement::{
    Activity, ActivityDefinition, Actor, Context, ExtensionValue, ObjectType, Score, Statement, StatementResult, Verb,
};
pub use store::{Lrs, LrsError, LrsQuery};
pub use vocab::{encode_segment, vocabulary, Vocabulary};

//! Knowledge context: lecture and exercise chunks, the concept prerequisite
//! graph and lexical retrieval.

mod base;
mod concepts;
mod text;
mod types;

pub use base::{KnowledgeBase, KnowledgeStore, CONCEPT_BOOST, DEFAULT_CHUNK_CHARS};
pub use concepts::ConceptGraph;
pub use text::{split_into_chunks, tokenize};
pub use types::{
    ChunkSource, Concept, ConceptAnnotation, ConceptRegistry, ConceptSpec, ExerciseKnowledge, KnowledgeChunk,
    LectureLocations, LecturePage, LectureUpload, RetrievalHit, RetrievalResult, SlideRef, TypicalMistake,
    NO_LOCATION,
};

#[derive(Debug, thiserror::Error)]
pub enum KceError {
    #[error("material {0} has no text")]
    EmptyMaterial(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("concept {concept} names unknown prerequisite {prerequisite}")]
    UnknownPrerequisite { concept: String, prerequisite: String },
    #[error("prerequisite cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown exercise {0}")]
    UnknownExercise(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{0}")]
    Invalid(String),
}

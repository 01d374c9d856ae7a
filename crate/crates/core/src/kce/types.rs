use serde::{Deserialize, Serialize};

/// A page of a lecture material.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlideRef {
    pub material_id: String,
    pub page: u32,
}

/// Registry input for one concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub prerequisites: Vec<String>,
}

/// The concept registry document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConceptRegistry {
    #[serde(default)]
    pub concepts: Vec<ConceptSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub name: String,
    pub definition: String,
    pub slide_refs: Vec<SlideRef>,
    pub prerequisites: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChunkSource {
    Lecture { material_id: String, page: u32 },
    Exercise { exercise_id: String, part: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub id: String,
    pub source: ChunkSource,
    pub text: String,
    pub concept_tags: Vec<String>,
    pub contains_solution: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypicalMistake {
    pub description: String,
    #[serde(default)]
    pub symptom: String,
}

fn default_language() -> String {
    "python3".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseKnowledge {
    pub exercise_id: String,
    pub statement: String,
    #[serde(default = "default_language")]
    pub language_tag: String,
    pub concepts: Vec<String>,
    pub difficulty: u32,
    pub reference_solution: String,
    #[serde(default)]
    pub typical_mistakes: Vec<TypicalMistake>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LecturePage {
    pub page_no: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAnnotation {
    pub concept_id: String,
    pub page: u32,
}

/// The lecture upload document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LectureUpload {
    pub material_id: String,
    #[serde(default)]
    pub title: String,
    pub pages: Vec<LecturePage>,
    #[serde(default)]
    pub concept_annotations: Vec<ConceptAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    pub contains_solution: bool,
}

/// Ranked hits: scores non-increasing, ties by chunk id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RetrievalResult {
    pub hits: Vec<RetrievalHit>,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.chunk_id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

pub const NO_LOCATION: &str = "no lecture location recorded";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LectureLocations {
    pub concept_id: String,
    pub refs: Vec<SlideRef>,
}

impl LectureLocations {
    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Human-readable list, or the "no location" marker.
    pub fn describe(&self) -> String {
        if self.refs.is_empty() {
            return format!("{}: {NO_LOCATION}", self.concept_id);
        }
        let pages: Vec<String> = self.refs.iter().map(|r| format!("{} p.{}", r.material_id, r.page)).collect();
        format!("{}: {}", self.concept_id, pages.join(", "))
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, RwLock};

use crate::grading::is_safe_id;

use super::concepts::ConceptGraph;
use super::text::{split_into_chunks, tokenize};
use super::types::{
    ChunkSource, ConceptSpec, ExerciseKnowledge, KnowledgeChunk, LectureLocations, LectureUpload, RetrievalHit,
    RetrievalResult, SlideRef,
};
use super::KceError;

pub const DEFAULT_CHUNK_CHARS: usize = 1500;
pub const CONCEPT_BOOST: f64 = 1.5;

#[derive(Debug, Clone)]
struct IndexedChunk {
    chunk: KnowledgeChunk,
    term_counts: BTreeMap<String, u32>,
}

/// Lecture chunks, exercise knowledge and the concept graph, with a lexical
/// tf-idf index.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    chunk_cap: usize,
    concepts: ConceptGraph,
    chunks: BTreeMap<String, IndexedChunk>,
    doc_freq: BTreeMap<String, u32>,
    materials: BTreeMap<String, Vec<String>>,
    exercises: BTreeMap<String, ExerciseKnowledge>,
    exercise_chunks: BTreeMap<String, Vec<String>>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(DEFAULT_CHUNK_CHARS)
    }
}

impl KnowledgeBase {
    pub fn new(chunk_cap: usize) -> Self {
        assert!(chunk_cap > 0, "chunk cap must be positive");
        Self {
            chunk_cap,
            concepts: ConceptGraph::default(),
            chunks: BTreeMap::new(),
            doc_freq: BTreeMap::new(),
            materials: BTreeMap::new(),
            exercises: BTreeMap::new(),
            exercise_chunks: BTreeMap::new(),
        }
    }

    pub fn chunk_cap(&self) -> usize {
        self.chunk_cap
    }

    pub fn concepts(&self) -> &ConceptGraph {
        &self.concepts
    }

    pub fn chunk(&self, id: &str) -> Option<&KnowledgeChunk> {
        self.chunks.get(id).map(|c| &c.chunk)
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunks(&self) -> impl Iterator<Item = &KnowledgeChunk> {
        self.chunks.values().map(|c| &c.chunk)
    }

    pub fn material_chunks(&self, material_id: &str) -> &[String] {
        self.materials.get(material_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn exercise_chunks(&self, exercise_id: &str) -> &[String] {
        self.exercise_chunks.get(exercise_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn exercise(&self, id: &str) -> Option<&ExerciseKnowledge> {
        self.exercises.get(id)
    }

    pub fn register_concepts(&mut self, specs: &[ConceptSpec]) -> Result<(), KceError> {
        self.concepts.register(specs)
    }

    pub fn concept_dependencies(&self, concept_id: &str) -> Result<Vec<String>, KceError> {
        self.concepts.dependencies(concept_id)
    }

    pub fn locate_in_lecture(&self, concept_id: &str) -> Result<LectureLocations, KceError> {
        self.concepts.locate(concept_id)
    }

    /// Per-concept locations for an exercise's known concepts, in concept id
    /// order.
    pub fn exercise_locations(&self, exercise_id: &str) -> Result<Vec<LectureLocations>, KceError> {
        let ek = self.exercises.get(exercise_id).ok_or_else(|| KceError::UnknownExercise(exercise_id.to_string()))?;
        let ids: BTreeSet<&String> = ek.concepts.iter().collect();
        Ok(ids.into_iter().filter_map(|c| self.concepts.locate(c).ok()).collect())
    }

    /// Deduplicated union of slide references over an exercise's concepts.
    pub fn exercise_slide_refs(&self, exercise_id: &str) -> Result<Vec<SlideRef>, KceError> {
        let all: BTreeSet<SlideRef> =
            self.exercise_locations(exercise_id)?.into_iter().flat_map(|l| l.refs).collect();
        Ok(all.into_iter().collect())
    }

    /// Replaces any earlier chunks of the same material.
    pub fn ingest_lecture(&mut self, upload: &LectureUpload) -> Result<Vec<String>, KceError> {
        let material = &upload.material_id;
        if !is_safe_id(material) {
            return Err(KceError::Invalid(format!("invalid material id {material:?}")));
        }
        if upload.pages.iter().all(|p| p.text.trim().is_empty()) {
            return Err(KceError::EmptyMaterial(material.clone()));
        }
        let mut pages = BTreeSet::new();
        for p in &upload.pages {
            if !pages.insert(p.page_no) {
                return Err(KceError::Invalid(format!("duplicate page {} in {material}", p.page_no)));
            }
        }
        let mut tags_by_page: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        let mut annotations = Vec::new();
        for a in &upload.concept_annotations {
            if !self.concepts.contains(&a.concept_id) {
                return Err(KceError::UnknownConcept(a.concept_id.clone()));
            }
            if !pages.contains(&a.page) {
                return Err(KceError::Invalid(format!("annotation for {} names missing page {}", a.concept_id, a.page)));
            }
            tags_by_page.entry(a.page).or_default().insert(a.concept_id.clone());
            annotations.push((a.concept_id.clone(), a.page));
        }

        let mut new_chunks = Vec::new();
        let mut sorted: Vec<_> = upload.pages.iter().collect();
        sorted.sort_by_key(|p| p.page_no);
        for page in sorted {
            let tags: Vec<String> = tags_by_page.get(&page.page_no).map(|s| s.iter().cloned().collect()).unwrap_or_default();
            for (n, text) in split_into_chunks(&page.text, self.chunk_cap).into_iter().enumerate() {
                new_chunks.push(KnowledgeChunk {
                    id: format!("lecture:{material}:p{:04}:{}", page.page_no, n + 1),
                    source: ChunkSource::Lecture { material_id: material.clone(), page: page.page_no },
                    text,
                    concept_tags: tags.clone(),
                    contains_solution: false,
                });
            }
        }

        if let Some(old) = self.materials.remove(material) {
            self.remove_chunks(&old);
        }
        let ids = self.insert_chunks(new_chunks);
        self.materials.insert(material.clone(), ids.clone());
        self.concepts.replace_material_refs(material, &annotations);
        Ok(ids)
    }

    /// Replaces any earlier knowledge for the same exercise.
    pub fn ingest_exercise(&mut self, ek: &ExerciseKnowledge) -> Result<Vec<String>, KceError> {
        let id = &ek.exercise_id;
        if !is_safe_id(id) {
            return Err(KceError::Invalid(format!("invalid exercise id {id:?}")));
        }
        if ek.reference_solution.trim().is_empty() {
            return Err(KceError::Invalid(format!("exercise {id} has an empty reference solution")));
        }
        let mut tags: Vec<String> = ek.concepts.clone();
        tags.sort();
        tags.dedup();

        let mut parts: Vec<(String, String, bool)> = vec![("statement".into(), ek.statement.clone(), false)];
        for (i, m) in ek.typical_mistakes.iter().enumerate() {
            let text = if m.symptom.trim().is_empty() {
                m.description.clone()
            } else {
                format!("{}\n\n{}", m.description, m.symptom)
            };
            parts.push((format!("mistake-{}", i + 1), text, false));
        }
        parts.push(("solution".into(), ek.reference_solution.clone(), true));

        let mut new_chunks = Vec::new();
        for (part, text, is_solution) in parts {
            for (n, piece) in split_into_chunks(&text, self.chunk_cap).into_iter().enumerate() {
                new_chunks.push(KnowledgeChunk {
                    id: format!("exercise:{id}:{part}:{}", n + 1),
                    source: ChunkSource::Exercise { exercise_id: id.clone(), part: part.clone() },
                    text: piece,
                    concept_tags: tags.clone(),
                    contains_solution: is_solution,
                });
            }
        }

        if let Some(old) = self.exercise_chunks.remove(id) {
            self.remove_chunks(&old);
        }
        let ids = self.insert_chunks(new_chunks);
        self.exercise_chunks.insert(id.clone(), ids.clone());
        self.exercises.insert(id.clone(), ek.clone());
        Ok(ids)
    }

    /// Ranks chunks by Σ tf × ln(1 + N/df) over the distinct query terms,
    /// boosted for chunks sharing a concept with the exercise.
    pub fn retrieve(&self, query: &str, exercise_id: Option<&str>, k: usize) -> Result<RetrievalResult, KceError> {
        if k == 0 {
            return Err(KceError::InvalidK);
        }
        let boost_tags: BTreeSet<&str> = match exercise_id {
            Some(id) => self
                .exercises
                .get(id)
                .ok_or_else(|| KceError::UnknownExercise(id.to_string()))?
                .concepts
                .iter()
                .map(String::as_str)
                .collect(),
            None => BTreeSet::new(),
        };
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let n = self.chunks.len() as f64;
        let idf: Vec<(&String, f64)> = terms
            .iter()
            .filter_map(|t| self.doc_freq.get(t).map(|df| (t, (1.0 + n / *df as f64).ln())))
            .collect();
        if idf.is_empty() {
            return Ok(RetrievalResult::default());
        }
        let mut hits: Vec<RetrievalHit> = Vec::new();
        for (id, c) in &self.chunks {
            let mut score = 0.0;
            for (term, w) in &idf {
                if let Some(tf) = c.term_counts.get(*term) {
                    score += *tf as f64 * w;
                }
            }
            if score <= 0.0 {
                continue;
            }
            if c.chunk.concept_tags.iter().any(|t| boost_tags.contains(t.as_str())) {
                score *= CONCEPT_BOOST;
            }
            hits.push(RetrievalHit { chunk_id: id.clone(), score, contains_solution: c.chunk.contains_solution });
        }
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
        hits.truncate(k);
        Ok(RetrievalResult { hits })
    }

    fn insert_chunks(&mut self, chunks: Vec<KnowledgeChunk>) -> Vec<String> {
        let mut ids = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            let mut term_counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokenize(&chunk.text) {
                *term_counts.entry(t).or_default() += 1;
            }
            for t in term_counts.keys() {
                *self.doc_freq.entry(t.clone()).or_default() += 1;
            }
            ids.push(chunk.id.clone());
            self.chunks.insert(chunk.id.clone(), IndexedChunk { chunk, term_counts });
        }
        ids
    }

    fn remove_chunks(&mut self, ids: &[String]) {
        for id in ids {
            let Some(c) = self.chunks.remove(id) else { continue };
            for t in c.term_counts.keys() {
                if let Some(df) = self.doc_freq.get_mut(t) {
                    *df -= 1;
                    if *df == 0 {
                        self.doc_freq.remove(t);
                    }
                }
            }
        }
    }
}

/// Shared knowledge base: readers take immutable snapshots while a single
/// writer applies each change to a copy and swaps it in.
#[derive(Debug, Default)]
pub struct KnowledgeStore {
    current: RwLock<Arc<KnowledgeBase>>,
    writer: Mutex<()>,
}

impl KnowledgeStore {
    pub fn new(base: KnowledgeBase) -> Self {
        Self { current: RwLock::new(Arc::new(base)), writer: Mutex::new(()) }
    }

    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Applies `f` to a copy of the base; the copy is published only if `f`
    /// succeeds.
    pub fn update<T>(&self, f: impl FnOnce(&mut KnowledgeBase) -> Result<T, KceError>) -> Result<T, KceError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(out)
    }

    pub fn ingest_lecture(&self, upload: &LectureUpload) -> Result<Vec<String>, KceError> {
        self.update(|kb| kb.ingest_lecture(upload))
    }

    pub fn ingest_exercise(&self, ek: &ExerciseKnowledge) -> Result<Vec<String>, KceError> {
        self.update(|kb| kb.ingest_exercise(ek))
    }

    pub fn register_concepts(&self, specs: &[ConceptSpec]) -> Result<(), KceError> {
        self.update(|kb| kb.register_concepts(specs))
    }

    pub fn retrieve(&self, query: &str, exercise_id: Option<&str>, k: usize) -> Result<RetrievalResult, KceError> {
        self.snapshot().retrieve(query, exercise_id, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kce::types::{ConceptAnnotation, LecturePage, TypicalMistake};

    fn spec(id: &str) -> ConceptSpec {
        ConceptSpec { id: id.into(), name: id.into(), definition: String::new(), prerequisites: vec![] }
    }

    fn lecture(id: &str, pages: &[&str], ann: &[(&str, u32)]) -> LectureUpload {
        LectureUpload {
            material_id: id.into(),
            title: String::new(),
            pages: pages.iter().enumerate().map(|(i, t)| LecturePage { page_no: i as u32 + 1, text: t.to_string() }).collect(),
            concept_annotations: ann.iter().map(|(c, p)| ConceptAnnotation { concept_id: c.to_string(), page: *p }).collect(),
        }
    }

    fn exercise(id: &str, concepts: &[&str]) -> ExerciseKnowledge {
        ExerciseKnowledge {
            exercise_id: id.into(),
            statement: "Sum the numbers read from standard input.".into(),
            language_tag: "python3".into(),
            concepts: concepts.iter().map(|s| s.to_string()).collect(),
            difficulty: 1,
            reference_solution: "import sys\nprint(sum(int(x) for x in sys.stdin.read().split()))".into(),
            typical_mistakes: vec![
                TypicalMistake { description: "Forgetting to convert tokens to integers".into(), symptom: "TypeError".into() },
                TypicalMistake { description: "Reading only the first line".into(), symptom: String::new() },
            ],
        }
    }

    #[test]
    fn empty_material_rejected() {
        let mut kb = KnowledgeBase::default();
        assert!(matches!(kb.ingest_lecture(&lecture("m", &[], &[])), Err(KceError::EmptyMaterial(_))));
        assert!(matches!(kb.ingest_lecture(&lecture("m", &["  \n"], &[])), Err(KceError::EmptyMaterial(_))));
    }

    #[test]
    fn reingest_replaces_chunks() {
        let mut kb = KnowledgeBase::default();
        let first = kb.ingest_lecture(&lecture("m", &["alpha", "beta", "gamma"], &[])).unwrap();
        let total = kb.chunk_count();
        let second = kb.ingest_lecture(&lecture("m", &["alpha", "beta", "gamma"], &[])).unwrap();
        assert_eq!(first, second);
        assert_eq!(kb.chunk_count(), total);
        kb.ingest_lecture(&lecture("m", &["delta"], &[])).unwrap();
        assert_eq!(kb.chunk_count(), 1);
        assert!(kb.retrieve("alpha", None, 5).unwrap().is_empty());
    }

    #[test]
    fn exercise_chunks_and_solution_flag() {
        let mut kb = KnowledgeBase::default();
        let ids = kb.ingest_exercise(&exercise("sum", &["loops"])).unwrap();
        assert_eq!(ids.len(), 4);
        let flagged: Vec<_> = ids.iter().filter(|id| kb.chunk(id).unwrap().contains_solution).collect();
        assert_eq!(flagged, [&"exercise:sum:solution:1".to_string()]);
    }

    #[test]
    fn mistake_wording_finds_mistake_first() {
        let mut kb = KnowledgeBase::default();
        kb.ingest_exercise(&exercise("sum", &[])).unwrap();
        let r = kb.retrieve("Forgetting to convert tokens to integers", Some("sum"), 3).unwrap();
        assert_eq!(r.hits[0].chunk_id, "exercise:sum:mistake-1:1");
    }

    #[test]
    fn absent_terms_and_empty_query() {
        let mut kb = KnowledgeBase::default();
        kb.ingest_lecture(&lecture("m", &["loops and lists"], &[])).unwrap();
        assert!(kb.retrieve("zebra", None, 3).unwrap().is_empty());
        assert!(kb.retrieve("  !! ", None, 3).unwrap().is_empty());
        assert!(matches!(kb.retrieve("loops", None, 0), Err(KceError::InvalidK)));
    }

    #[test]
    fn boost_and_tie_break() {
        let mut kb = KnowledgeBase::default();
        kb.register_concepts(&[spec("loops")]).unwrap();
        kb.ingest_lecture(&lecture("b", &["for loop"], &[])).unwrap();
        kb.ingest_lecture(&lecture("a", &["for loop"], &[])).unwrap();
        kb.ingest_lecture(&lecture("c", &["for loop"], &[("loops", 1)])).unwrap();
        let plain = kb.retrieve("loop", None, 5).unwrap();
        assert_eq!(plain.ids(), ["lecture:a:p0001:1", "lecture:b:p0001:1", "lecture:c:p0001:1"]);
        kb.ingest_exercise(&exercise("ex", &["loops"])).unwrap();
        let boosted = kb.retrieve("loop", Some("ex"), 5).unwrap();
        assert_eq!(boosted.hits[0].chunk_id, "lecture:c:p0001:1");
        assert!((boosted.hits[0].score / boosted.hits[1].score - 1.5).abs() < 1e-12);
    }

    #[test]
    fn annotations_update_locations() {
        let mut kb = KnowledgeBase::default();
        kb.register_concepts(&[spec("loops"), spec("io")]).unwrap();
        assert!(matches!(kb.ingest_lecture(&lecture("m", &["x"], &[("ghost", 1)])), Err(KceError::UnknownConcept(_))));
        kb.ingest_lecture(&lecture("m", &["x", "y", "z"], &[("loops", 3), ("loops", 1)])).unwrap();
        kb.ingest_lecture(&lecture("k", &["x"], &[("loops", 1), ("io", 1)])).unwrap();
        let loc = kb.locate_in_lecture("loops").unwrap();
        let pages: Vec<_> = loc.refs.iter().map(|r| (r.material_id.as_str(), r.page)).collect();
        assert_eq!(pages, [("k", 1), ("m", 1), ("m", 3)]);
        let io = kb.locate_in_lecture("io").unwrap();
        assert_eq!(io.refs.len(), 1);
        kb.ingest_lecture(&lecture("k", &["x"], &[])).unwrap();
        assert!(kb.locate_in_lecture("io").unwrap().describe().contains(crate::kce::NO_LOCATION));
        kb.ingest_exercise(&exercise("ex", &["loops", "io", "unregistered"])).unwrap();
        assert_eq!(kb.exercise_slide_refs("ex").unwrap().len(), 2);
    }

    #[test]
    fn store_publishes_only_successful_updates() {
        let store = KnowledgeStore::default();
        store.register_concepts(&[spec("a")]).unwrap();
        let before = store.snapshot();
        assert!(store.ingest_lecture(&lecture("m", &["x"], &[("missing", 1)])).is_err());
        assert_eq!(store.snapshot().chunk_count(), before.chunk_count());
        store.ingest_lecture(&lecture("m", &["x"], &[("a", 1)])).unwrap();
        assert_eq!(before.chunk_count(), 0);
        assert_eq!(store.snapshot().chunk_count(), 1);
    }
}

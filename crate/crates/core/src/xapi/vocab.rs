use std::sync::LazyLock;

use serde::Deserialize;

use super::statement::Verb;

const DOCUMENT: &str = include_str!("../../data/vocabulary.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct VerbEntry {
    pub iri: String,
    pub display: String,
}

impl VerbEntry {
    pub fn verb(&self) -> Verb {
        Verb { iri: self.iri.clone(), display: self.display.clone() }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Verbs {
    pub attempted: VerbEntry,
    pub opened: VerbEntry,
    pub page_viewed: VerbEntry,
    pub closed: VerbEntry,
    pub requested_feedback: VerbEntry,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ActivityTypes {
    pub exercise: String,
    pub material: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Extensions {
    pub exercise_id: String,
    pub submission_id: String,
    pub source_sha256: String,
    pub test_results: String,
    pub material_id: String,
    pub page: String,
    pub request_type: String,
    pub srl_phase: String,
}

/// The shipped IRI registry.
#[derive(Debug, Clone, Deserialize)]
pub struct Vocabulary {
    pub activity_base: String,
    pub verbs: Verbs,
    pub activity_types: ActivityTypes,
    pub extensions: Extensions,
}

impl Vocabulary {
    pub fn exercise_iri(&self, exercise_id: &str) -> String {
        format!("{}/exercises/{}", self.activity_base, encode_segment(exercise_id))
    }

    pub fn material_iri(&self, material_id: &str) -> String {
        format!("{}/materials/{}", self.activity_base, encode_segment(material_id))
    }

    pub fn is_viewer_verb(&self, iri: &str) -> bool {
        iri == self.verbs.opened.iri || iri == self.verbs.page_viewed.iri || iri == self.verbs.closed.iri
    }
}

pub fn vocabulary() -> &'static Vocabulary {
    static VOCAB: LazyLock<Vocabulary> =
        LazyLock::new(|| toml::from_str(DOCUMENT).expect("shipped vocabulary document is valid"));
    &VOCAB
}

/// Percent-encodes everything outside the RFC 3986 unreserved set.
pub fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xapi::iri::is_absolute_iri;

    #[test]
    fn every_registry_iri_is_absolute() {
        let v = vocabulary();
        let verbs = [&v.verbs.attempted, &v.verbs.opened, &v.verbs.page_viewed, &v.verbs.closed, &v.verbs.requested_feedback];
        for verb in verbs {
            assert!(is_absolute_iri(&verb.iri), "{}", verb.iri);
        }
        let e = &v.extensions;
        for iri in [&e.exercise_id, &e.submission_id, &e.source_sha256, &e.test_results, &e.material_id, &e.page, &e.request_type, &e.srl_phase] {
            assert!(is_absolute_iri(iri), "{iri}");
        }
        assert!(v.verbs.attempted.iri.ends_with("/verbs/attempted"));
        assert!(is_absolute_iri(&v.exercise_iri("a b/c")));
    }

    #[test]
    fn segment_encoding() {
        assert_eq!(encode_segment("ex-1.a_b~"), "ex-1.a_b~");
        assert_eq!(encode_segment("a b/é"), "a%20b%2F%C3%A9");
    }
}

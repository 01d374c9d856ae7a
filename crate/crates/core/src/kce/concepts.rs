use std::collections::{BTreeMap, BTreeSet};

use super::types::{Concept, ConceptSpec, LectureLocations, SlideRef};
use super::KceError;

/// Concepts and their prerequisite DAG.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptGraph {
    concepts: BTreeMap<String, Concept>,
}

impl ConceptGraph {
    pub fn get(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    /// Adds or replaces concepts. Existing slide references are kept. The
    /// graph is unchanged unless every prerequisite resolves and the result
    /// is acyclic.
    pub fn register(&mut self, specs: &[ConceptSpec]) -> Result<(), KceError> {
        let mut next = self.concepts.clone();
        for spec in specs {
            if spec.id.trim().is_empty() {
                return Err(KceError::Invalid("concept id must not be empty".into()));
            }
            let slide_refs = next.get(&spec.id).map(|c| c.slide_refs.clone()).unwrap_or_default();
            let mut prerequisites = spec.prerequisites.clone();
            prerequisites.sort();
            prerequisites.dedup();
            next.insert(
                spec.id.clone(),
                Concept {
                    id: spec.id.clone(),
                    name: spec.name.clone(),
                    definition: spec.definition.clone(),
                    slide_refs,
                    prerequisites,
                },
            );
        }
        for c in next.values() {
            for p in &c.prerequisites {
                if !next.contains_key(p) {
                    return Err(KceError::UnknownPrerequisite { concept: c.id.clone(), prerequisite: p.clone() });
                }
            }
        }
        if let Some(cycle) = find_cycle(&next) {
            return Err(KceError::Cycle(cycle));
        }
        self.concepts = next;
        Ok(())
    }

    /// Transitive prerequisites of `id`, dependencies before dependents,
    /// smallest id first among those ready at each step.
    pub fn dependencies(&self, id: &str) -> Result<Vec<String>, KceError> {
        let root = self.concepts.get(id).ok_or_else(|| KceError::UnknownConcept(id.to_string()))?;
        let mut ancestors = BTreeSet::new();
        let mut stack: Vec<&str> = root.prerequisites.iter().map(String::as_str).collect();
        while let Some(c) = stack.pop() {
            if ancestors.insert(c.to_string()) {
                stack.extend(self.concepts[c].prerequisites.iter().map(String::as_str));
            }
        }
        let mut pending: BTreeMap<&str, usize> =
            ancestors.iter().map(|a| (a.as_str(), self.concepts[a].prerequisites.len())).collect();
        let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, n)| **n == 0).map(|(a, _)| *a).collect();
        let mut order = Vec::with_capacity(ancestors.len());
        while let Some(next) = ready.pop_first() {
            pending.remove(next);
            order.push(next.to_string());
            for (dep, remaining) in pending.iter_mut() {
                if self.concepts[*dep].prerequisites.iter().any(|p| p == next) {
                    *remaining -= 1;
                    if *remaining == 0 {
                        ready.insert(dep);
                    }
                }
            }
        }
        Ok(order)
    }

    pub fn locate(&self, id: &str) -> Result<LectureLocations, KceError> {
        let c = self.concepts.get(id).ok_or_else(|| KceError::UnknownConcept(id.to_string()))?;
        let mut refs = c.slide_refs.clone();
        refs.sort();
        refs.dedup();
        Ok(LectureLocations { concept_id: id.to_string(), refs })
    }

    pub(crate) fn replace_material_refs(&mut self, material_id: &str, annotations: &[(String, u32)]) {
        for c in self.concepts.values_mut() {
            c.slide_refs.retain(|r| r.material_id != material_id);
        }
        for (concept, page) in annotations {
            if let Some(c) = self.concepts.get_mut(concept) {
                c.slide_refs.push(SlideRef { material_id: material_id.to_string(), page: *page });
                c.slide_refs.sort();
                c.slide_refs.dedup();
            }
        }
    }
}

/// First cycle found by a depth-first search in id order, as a closed path
/// (`[a, b, a]`).
fn find_cycle(concepts: &BTreeMap<String, Concept>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = concepts.keys().map(|k| (k.as_str(), Mark::New)).collect();
    for start in concepts.keys() {
        if marks[start.as_str()] != Mark::New {
            continue;
        }
        // (node, next prerequisite index)
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start.as_str(), Mark::Active);
        while let Some((node, i)) = stack.last_mut() {
            let prereqs = &concepts[*node].prerequisites;
            if *i < prereqs.len() {
                let p = prereqs[*i].as_str();
                *i += 1;
                match marks[p] {
                    Mark::New => {
                        marks.insert(p, Mark::Active);
                        stack.push((p, 0));
                    }
                    Mark::Active => {
                        let pos = stack.iter().position(|(n, _)| *n == p).unwrap_or(0);
                        let mut cycle: Vec<String> = stack[pos..].iter().map(|(n, _)| n.to_string()).collect();
                        cycle.push(p.to_string());
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, prereqs: &[&str]) -> ConceptSpec {
        ConceptSpec { id: id.into(), name: id.to_uppercase(), definition: String::new(), prerequisites: prereqs.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn no_prerequisites() {
        let mut g = ConceptGraph::default();
        g.register(&[spec("a", &[])]).unwrap();
        assert!(g.dependencies("a").unwrap().is_empty());
    }

    #[test]
    fn chain() {
        let mut g = ConceptGraph::default();
        g.register(&[spec("c", &["b"]), spec("b", &["a"]), spec("a", &[])]).unwrap();
        assert_eq!(g.dependencies("c").unwrap(), ["a", "b"]);
    }

    #[test]
    fn diamond_order_is_deterministic() {
        let mut g = ConceptGraph::default();
        g.register(&[spec("root", &[]), spec("y", &["root"]), spec("x", &["root"]), spec("top", &["y", "x"])]).unwrap();
        assert_eq!(g.dependencies("top").unwrap(), ["root", "x", "y"]);
    }

    #[test]
    fn cycle_rejected_atomically() {
        let mut g = ConceptGraph::default();
        g.register(&[spec("a", &[]), spec("b", &["a"])]).unwrap();
        let before = g.clone();
        let err = g.register(&[spec("a", &["b"]), spec("z", &[])]).unwrap_err();
        match err {
            KceError::Cycle(c) => {
                assert_eq!(c.first(), c.last());
                assert!(c.contains(&"a".to_string()) && c.contains(&"b".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(g, before);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut g = ConceptGraph::default();
        assert!(matches!(g.register(&[spec("a", &["a"])]), Err(KceError::Cycle(_))));
    }

    #[test]
    fn unknown_prerequisite_and_concept() {
        let mut g = ConceptGraph::default();
        assert!(matches!(g.register(&[spec("a", &["ghost"])]), Err(KceError::UnknownPrerequisite { .. })));
        assert!(matches!(g.dependencies("ghost"), Err(KceError::UnknownConcept(_))));
    }
}

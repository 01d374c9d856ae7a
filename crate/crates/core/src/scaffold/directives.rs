use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::validation::FieldErrors;

use super::phase::{RequestType, SrlPhase};

const DEFAULT_TABLE: &str = include_str!("../../data/directives.toml");

/// One (phase, request type) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectiveRow {
    pub phase: SrlPhase,
    pub request_type: RequestType,
    pub directive_text: String,
    pub strategy_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseInfo {
    pub phase: SrlPhase,
    pub strategy_tags: Vec<String>,
    pub anchor: String,
    pub fallback_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    phase: Vec<PhaseInfo>,
    directive: Vec<DirectiveRow>,
}

/// The complete directive table: ten cells plus per-phase strategy data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectiveTable {
    rows: BTreeMap<(SrlPhase, RequestType), DirectiveRow>,
    phases: BTreeMap<SrlPhase, PhaseInfo>,
}

static DEFAULT: LazyLock<DirectiveTable> =
    LazyLock::new(|| DirectiveTable::from_toml(DEFAULT_TABLE).expect("shipped directive table is valid"));

impl Default for DirectiveTable {
    fn default() -> Self {
        DEFAULT.clone()
    }
}

impl DirectiveTable {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let doc: TableDocument = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut phases = BTreeMap::new();
        for p in doc.phase {
            if p.anchor.trim().is_empty() || p.fallback_hint.trim().is_empty() || p.strategy_tags.is_empty() {
                return Err(format!("phase {} is incomplete", p.phase));
            }
            if phases.insert(p.phase, p).is_some() {
                return Err("duplicate phase entry".into());
            }
        }
        if phases.len() != SrlPhase::ALL.len() {
            return Err("every phase needs an entry".into());
        }
        validate_rows(&doc.directive, "directive").into_result().map_err(|e| e.to_string())?;
        let rows: BTreeMap<_, _> = doc.directive.into_iter().map(|r| ((r.phase, r.request_type), r)).collect();
        if rows.len() != SrlPhase::ALL.len() * RequestType::ALL.len() {
            return Err("every phase and request type pair needs a directive".into());
        }
        Ok(DirectiveTable { rows, phases })
    }

    /// The table with every cell replaced. Overrides must name all ten
    /// (phase, request type) pairs exactly once.
    pub fn with_overrides(&self, overrides: &[DirectiveRow]) -> Result<Self, FieldErrors> {
        let mut errors = validate_rows(overrides, "directive_overrides");
        let named: BTreeSet<_> = overrides.iter().map(|r| (r.phase, r.request_type)).collect();
        for p in SrlPhase::ALL {
            for r in RequestType::ALL {
                if !named.contains(&(p, r)) {
                    errors.push("directive_overrides", format!("missing row for {p} / {r}"));
                }
            }
        }
        errors.into_result()?;
        let mut next = self.clone();
        for row in overrides {
            next.rows.insert((row.phase, row.request_type), row.clone());
        }
        Ok(next)
    }

    pub fn row(&self, phase: SrlPhase, request_type: RequestType) -> &DirectiveRow {
        &self.rows[&(phase, request_type)]
    }

    pub fn rows(&self) -> impl Iterator<Item = &DirectiveRow> {
        self.rows.values()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn phase_info(&self, phase: SrlPhase) -> &PhaseInfo {
        &self.phases[&phase]
    }

    pub fn fallback_hint(&self, phase: SrlPhase) -> &str {
        &self.phases[&phase].fallback_hint
    }
}

/// Directive text for one cell of the shipped table.
pub fn phase_directive(phase: SrlPhase, request_type: RequestType) -> &'static str {
    &DEFAULT.row(phase, request_type).directive_text
}

fn validate_rows(rows: &[DirectiveRow], prefix: &str) -> FieldErrors {
    let mut errors = FieldErrors::default();
    let mut seen = BTreeSet::new();
    for (i, row) in rows.iter().enumerate() {
        if row.directive_text.trim().is_empty() {
            errors.push(format!("{prefix}[{i}].directive_text"), "must not be empty");
        }
        if row.strategy_tags.is_empty() || row.strategy_tags.iter().any(|t| t.trim().is_empty()) {
            errors.push(format!("{prefix}[{i}].strategy_tags"), "must list at least one non-empty tag");
        }
        if !seen.insert((row.phase, row.request_type)) {
            errors.push(format!("{prefix}[{i}]"), "duplicate phase and request type pair");
        }
    }
    errors
}

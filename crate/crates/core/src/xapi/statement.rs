use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use crate::rational::Rational;
use crate::timestamp::Timestamp;
use crate::validation::{FieldError, FieldErrors};

use super::iri::is_absolute_iri;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub account_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verb {
    pub iri: String,
    pub display: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ObjectType {
    #[default]
    Activity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityDefinition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_iri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    pub iri: String,
    #[serde(default)]
    pub object_type: ObjectType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<ActivityDefinition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Score {
    pub raw: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StatementResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

/// Scalar extension value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtensionValue {
    Bool(bool),
    Integer(i64),
    Number(f64),
    Text(String),
}

impl ExtensionValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ExtensionValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for ExtensionValue {
    fn from(s: &str) -> Self {
        ExtensionValue::Text(s.to_string())
    }
}

impl From<String> for ExtensionValue {
    fn from(s: String) -> Self {
        ExtensionValue::Text(s)
    }
}

impl From<i64> for ExtensionValue {
    fn from(n: i64) -> Self {
        ExtensionValue::Integer(n)
    }
}

impl From<bool> for ExtensionValue {
    fn from(b: bool) -> Self {
        ExtensionValue::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Context {
    #[serde(default)]
    pub extensions: BTreeMap<String, ExtensionValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Statement {
    pub id: Uuid,
    pub actor: Actor,
    pub verb: Verb,
    pub object: Activity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<StatementResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Context>,
    pub timestamp: Timestamp,
    /// Assigned by the store; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored: Option<Timestamp>,
}

impl Statement {
    pub fn new(actor_id: impl Into<String>, verb: Verb, object_iri: impl Into<String>, timestamp: Timestamp) -> Self {
        Statement {
            id: Uuid::new_v4(),
            actor: Actor { account_id: actor_id.into(), display_name: None },
            verb,
            object: Activity { iri: object_iri.into(), object_type: ObjectType::Activity, definition: None },
            result: None,
            context: None,
            timestamp,
            stored: None,
        }
    }

    pub fn extension(&self, iri: &str) -> Option<&ExtensionValue> {
        self.context.as_ref().and_then(|c| c.extensions.get(iri))
    }

    pub fn set_extension(&mut self, iri: impl Into<String>, value: impl Into<ExtensionValue>) {
        self.context.get_or_insert_with(Context::default).extensions.insert(iri.into(), value.into());
    }

    /// Equality ignoring the server-assigned `stored` field.
    pub fn same_content(&self, other: &Statement) -> bool {
        let mut a = self.clone();
        a.stored = other.stored;
        a == *other
    }

    pub fn validate(&self) -> Result<(), FieldErrors> {
        let mut errs = FieldErrors::default();
        if self.actor.account_id.trim().is_empty() {
            errs.push("actor.account_id", "must not be empty");
        }
        if !is_absolute_iri(&self.verb.iri) {
            errs.push("verb.iri", "must be an absolute IRI");
        }
        if self.verb.display.trim().is_empty() {
            errs.push("verb.display", "must not be empty");
        }
        if !is_absolute_iri(&self.object.iri) {
            errs.push("object.iri", "must be an absolute IRI");
        }
        if let Some(t) = self.object.definition.as_ref().and_then(|d| d.type_iri.as_ref()) {
            if !is_absolute_iri(t) {
                errs.push("object.definition.type_iri", "must be an absolute IRI");
            }
        }
        if let Some(score) = self.result.as_ref().and_then(|r| r.score.as_ref()) {
            if let (Some(min), Some(max)) = (score.min, score.max) {
                if min > max {
                    errs.push("result.score.min", "must not exceed max");
                }
            }
            if score.min.is_some_and(|m| score.raw < m) {
                errs.push("result.score.raw", "below min");
            }
            if score.max.is_some_and(|m| score.raw > m) {
                errs.push("result.score.raw", "above max");
            }
        }
        if let Some(ctx) = &self.context {
            for (k, v) in &ctx.extensions {
                if !is_absolute_iri(k) {
                    errs.push(format!("context.extensions[{k:?}]"), "key must be an absolute IRI");
                }
                if let ExtensionValue::Number(n) = v {
                    if !n.is_finite() {
                        errs.push(format!("context.extensions[{k:?}]"), "number must be finite");
                    }
                }
            }
        }
        errs.into_result()
    }

    /// Parses a wire statement with path-addressed errors. A missing `id` or
    /// `timestamp` is filled in (new UUID, current time); `stored` is dropped.
    pub fn from_json(value: &Value) -> Result<Statement, FieldErrors> {
        let Value::Object(map) = value else {
            return Err(FieldError::new("$", "statement must be a JSON object").into());
        };
        let mut errs = FieldErrors::default();
        for field in ["actor", "verb", "object"] {
            match map.get(field) {
                None | Some(Value::Null) => errs.push(field, "required field missing"),
                Some(Value::Object(_)) => {}
                Some(_) => errs.push(field, "must be an object"),
            }
        }
        errs.clone().into_result()?;
        let mut map = map.clone();
        map.remove("stored");
        map.entry("id").or_insert_with(|| Value::String(Uuid::new_v4().to_string()));
        map.entry("timestamp").or_insert_with(|| Value::String(Timestamp::now().to_string()));
        let stmt: Statement = serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
            let path = e.path().to_string();
            FieldErrors::from(FieldError::new(path, e.into_inner().to_string()))
        })?;
        stmt.validate()?;
        Ok(stmt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "actor": {"account_id": "learner-1"},
            "verb": {"iri": "http://adlnet.gov/expapi/verbs/attempted", "display": "attempted"},
            "object": {"iri": "https://example.org/exercises/1"}
        })
    }

    #[test]
    fn minimal_statement_accepted() {
        let s = Statement::from_json(&minimal()).unwrap();
        assert_eq!(s.actor.account_id, "learner-1");
        assert_eq!(s.object.object_type, ObjectType::Activity);
    }

    #[test]
    fn missing_verb_cites_verb() {
        let mut v = minimal();
        v.as_object_mut().unwrap().remove("verb");
        let errs = Statement::from_json(&v).unwrap_err();
        assert_eq!(errs.paths(), ["verb"]);
    }

    #[test]
    fn malformed_iri_cites_path() {
        let mut v = minimal();
        v["object"]["iri"] = json!("not an iri");
        assert_eq!(Statement::from_json(&v).unwrap_err().paths(), ["object.iri"]);
    }

    #[test]
    fn type_error_cites_nested_path() {
        let mut v = minimal();
        v["result"] = json!({"score": {"raw": true}});
        let errs = Statement::from_json(&v).unwrap_err();
        assert_eq!(errs.paths(), ["result.score.raw"]);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = minimal();
        v["actor"]["gender"] = json!("x");
        assert!(Statement::from_json(&v).is_err());
    }

    #[test]
    fn score_bounds_checked() {
        let mut v = minimal();
        v["result"] = json!({"score": {"raw": "5", "min": 0, "max": 3}});
        assert_eq!(Statement::from_json(&v).unwrap_err().paths(), ["result.score.raw"]);
    }

    #[test]
    fn json_round_trip() {
        let mut s = Statement::from_json(&minimal()).unwrap();
        s.result = Some(StatementResult { score: Some(Score { raw: Rational::new(1, 3), min: None, max: None }), success: Some(false), response: None });
        s.set_extension("https://example.org/ext/n", 1.5f64.to_string());
        s.set_extension("https://example.org/ext/f", ExtensionValue::Number(0.1));
        let text = serde_json::to_string(&s).unwrap();
        let back: Statement = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}

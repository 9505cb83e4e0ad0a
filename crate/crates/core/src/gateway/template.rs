//! Prompt templates with named placeholders and embedded demonstrations.
//!
//! Template bodies live in versioned files under `templates/`, not in code;
//! each carries its own 2-shot demonstration block. Rendering is a single
//! pass: `{name}` is replaced by the bound value, values are inserted
//! literally and never re-expanded, and an unbound placeholder is an error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

/// The prompt kinds the pipeline issues, one per pipeline decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    EntityExtract,
    TopicPrune,
    ClueQuery,
    RelationPruneBatched,
    RelationPruneSingle,
    ExamineReason,
    FinalAnswer,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::EntityExtract,
        TemplateId::TopicPrune,
        TemplateId::ClueQuery,
        TemplateId::RelationPruneBatched,
        TemplateId::RelationPruneSingle,
        TemplateId::ExamineReason,
        TemplateId::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::EntityExtract => "entity_extract",
            TemplateId::TopicPrune => "topic_prune",
            TemplateId::ClueQuery => "clue_query",
            TemplateId::RelationPruneBatched => "relation_prune_batched",
            TemplateId::RelationPruneSingle => "relation_prune_single",
            TemplateId::ExamineReason => "examine_reason",
            TemplateId::FinalAnswer => "final_answer",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One template: an id plus a body with `{name}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        Self { id, body: body.into() }
    }

    /// Substitute placeholders from `bindings`. Missing binding → error
    /// naming the placeholder; a `{` that does not open a well-formed
    /// placeholder is kept literally.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, GatewayError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_placeholder_name(&after[..close]) => {
                    let name = &after[..close];
                    match bindings.get(name) {
                        Some(value) => out.push_str(value),
                        None => {
                            return Err(GatewayError::UnboundPlaceholder {
                                template: self.id.to_string(),
                                name: name.to_owned(),
                            })
                        }
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// The full template set, keyed by id.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl PromptLibrary {
    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for (id, body) in [
            (
                TemplateId::EntityExtract,
                include_str!("../../templates/entity_extract.txt"),
            ),
            (
                TemplateId::TopicPrune,
                include_str!("../../templates/topic_prune.txt"),
            ),
            (
                TemplateId::ClueQuery,
                include_str!("../../templates/clue_query.txt"),
            ),
            (
                TemplateId::RelationPruneBatched,
                include_str!("../../templates/relation_prune_batched.txt"),
            ),
            (
                TemplateId::RelationPruneSingle,
                include_str!("../../templates/relation_prune_single.txt"),
            ),
            (
                TemplateId::ExamineReason,
                include_str!("../../templates/examine_reason.txt"),
            ),
            (
                TemplateId::FinalAnswer,
                include_str!("../../templates/final_answer.txt"),
            ),
        ] {
            templates.insert(id, PromptTemplate::new(id, body));
        }
        Self { templates }
    }

    /// Builtin set with any `<template id>.txt` files found in `dir`
    /// overriding the shipped bodies.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut lib = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path)?;
                lib.templates.insert(id, PromptTemplate::new(id, body));
            }
        }
        Ok(lib)
    }

    pub fn get(&self, id: TemplateId) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(&id)
            .ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, (*v).to_owned())).collect()
    }

    #[test]
    fn render_substitutes_binding() {
        let t = PromptTemplate::new(TemplateId::EntityExtract, "Q: {q}");
        assert_eq!(t.render(&bind(&[("q", "x")])).unwrap(), "Q: x");
    }

    #[test]
    fn render_missing_binding_names_placeholder() {
        let t = PromptTemplate::new(TemplateId::EntityExtract, "Q: {q}");
        match t.render(&BTreeMap::new()).unwrap_err() {
            GatewayError::UnboundPlaceholder { name, .. } => assert_eq!(name, "q"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::new(TemplateId::EntityExtract, "Q: {q}");
        let out = t.render(&bind(&[("q", "{loop} and {q}")])).unwrap();
        assert_eq!(out, "Q: {loop} and {q}");
    }

    #[test]
    fn render_keeps_nonplaceholder_braces() {
        let t = PromptTemplate::new(TemplateId::EntityExtract, "a { b } and {X} end");
        assert_eq!(t.render(&BTreeMap::new()).unwrap(), "a { b } and {X} end");
    }

    #[test]
    fn builtin_templates_each_carry_two_demonstrations() {
        let lib = PromptLibrary::builtin();
        for id in TemplateId::ALL {
            let body = &lib.get(id).unwrap().body;
            let demos = body.matches("### Example").count();
            assert_eq!(demos, 2, "{id} should embed exactly 2 worked examples");
        }
    }

    #[test]
    fn builtin_templates_bind_their_documented_placeholders() {
        let lib = PromptLibrary::builtin();
        let full = bind(&[
            ("question", "q"),
            ("candidates", "c"),
            ("topics", "t"),
            ("width", "2"),
            ("clue_queries", "cq"),
            ("clue_query", "cq"),
            ("entities", "e"),
            ("paths", "p"),
            ("evidence", "ev"),
        ]);
        for id in TemplateId::ALL {
            lib.get(id).unwrap().render(&full).unwrap();
        }
    }
}

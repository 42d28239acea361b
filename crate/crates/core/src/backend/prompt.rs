//! The prompt catalog: every string sent to a model lives in
//! `prompts/catalog.json` and is addressed by id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sha256_hex, ChatMessage};

const BUILTIN: &str = include_str!("../../prompts/catalog.json");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("placeholder `{{{0}}}` has no value")]
    UnboundPlaceholder(String),
    #[error("prompt catalog is not valid JSON: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCatalog {
    pub version: u32,
    pub templates: BTreeMap<String, PromptTemplate>,
    #[serde(skip)]
    hash: String,
}

impl PromptCatalog {
    /// The catalog compiled into the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("bundled prompt catalog parses")
    }

    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let mut c: PromptCatalog =
            serde_json::from_str(text).map_err(|e| PromptError::Malformed(e.to_string()))?;
        c.hash = sha256_hex(text);
        Ok(c)
    }

    /// sha256 of the catalog source, recorded in run manifests.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_owned()))
    }

    pub fn render(&self, id: &str, vars: &[(&str, &str)]) -> Result<Vec<ChatMessage>, PromptError> {
        self.get(id)?
            .messages
            .iter()
            .map(|m| Ok(ChatMessage::new(m.role, render(&m.content, vars)?)))
            .collect()
    }

    /// Renders a single-message template and returns its content.
    pub fn render_text(&self, id: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut msgs = self.render(id, vars)?;
        Ok(msgs.pop().map(|m| m.content).unwrap_or_default())
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Substitutes `{name}` placeholders in one pass, so braces inside values are
/// never expanded. `{{` and `}}` stand for literal braces; a `{` not followed
/// by an identifier and `}` is kept as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if let Some(after) = tail.strip_prefix('{') {
            let name_len = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(tail.len() - 1);
            if name_len > 0 && tail[1 + name_len..].starts_with('}') {
                let name = &tail[1..1 + name_len];
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::UnboundPlaceholder(name.to_owned()))?;
                out.push_str(value);
                rest = &tail[name_len + 2..];
                continue;
            }
        }
        out.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Role;

    #[test]
    fn substitutes_in_one_pass() {
        let s = render("a {x} b {y}", &[("x", "{y}"), ("y", "2")]).unwrap();
        assert_eq!(s, "a {y} b 2");
    }

    #[test]
    fn literal_braces() {
        assert_eq!(render("{{x}} {", &[]).unwrap(), "{x} {");
        assert_eq!(render("{\"1\": \"A\"}", &[]).unwrap(), "{\"1\": \"A\"}");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        assert_eq!(
            render("into {lang}", &[]),
            Err(PromptError::UnboundPlaceholder("lang".into()))
        );
    }

    #[test]
    fn builtin_catalog_has_every_template() {
        let c = PromptCatalog::builtin();
        for id in [
            "article_context",
            "translate_chunk",
            "translate_chunk_terms",
            "translate_plain",
            "translate_plain_terms",
            "one_shot_question",
            "quiz_generate",
            "quiz_translate",
            "quiz_execute",
            "quiz_execute_original",
            "quiz_contamination",
            "quiz_answer_reask",
        ] {
            assert!(c.get(id).is_ok(), "{id}");
        }
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn article_context_is_a_system_message() {
        let c = PromptCatalog::builtin();
        let m = c.render("article_context", &[("article", "ART")]).unwrap();
        assert_eq!(m[0].role, Role::System);
        assert!(m[0].content.ends_with("ART"));
    }

    #[test]
    fn quiz_generate_counts_questions() {
        let c = PromptCatalog::builtin();
        let t = c
            .render_text("quiz_generate", &[("n", "50"), ("article", "X")])
            .unwrap();
        assert!(t.contains("Generate 50 detailed"));
        assert!(t.contains("labeled 1-50"));
        assert!(t.contains("'I don't know'"));
    }
}

//! Named prompt templates with `{placeholder}` substitution.
//!
//! A placeholder is a brace-wrapped lowercase identifier such as `{query}`.
//! Anything else in braces (`{True / False}`) is literal text.

use std::collections::{BTreeMap, BTreeSet};

use super::{CompletionRequest, LlmError};

pub const SIMPLIFY: &str = "simplify";
pub const DECOMPOSE: &str = "decompose";
pub const EXPAND: &str = "expand";
pub const GENERATE_NORMAL: &str = "generate_normal";
pub const GENERATE_STRICT: &str = "generate_strict";
pub const GENERATE_REWRITE: &str = "generate_rewrite";
pub const CAUSAL_VERIFICATION: &str = "causal_verification";

/// Sentence the strict template mandates when knowledge is missing.
pub const ABSTENTION: &str = "I cannot answer: insufficient retrieved evidence.";

const BUILTIN: &[(&str, &str)] = &[
    (SIMPLIFY, include_str!("../../assets/prompts/simplify.txt")),
    (DECOMPOSE, include_str!("../../assets/prompts/decompose.txt")),
    (EXPAND, include_str!("../../assets/prompts/expand.txt")),
    ("simplify_condensed", include_str!("../../assets/prompts/simplify_condensed.txt")),
    ("decompose_condensed", include_str!("../../assets/prompts/decompose_condensed.txt")),
    ("expand_condensed", include_str!("../../assets/prompts/expand_condensed.txt")),
    (GENERATE_NORMAL, include_str!("../../assets/prompts/generate_normal.txt")),
    (GENERATE_STRICT, include_str!("../../assets/prompts/generate_strict.txt")),
    (GENERATE_REWRITE, include_str!("../../assets/prompts/generate_rewrite.txt")),
    (CAUSAL_VERIFICATION, include_str!("../../assets/prompts/causal_verification.txt")),
];

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn parse(template: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                if open > 0 {
                    pieces.push(Piece::Text(&rest[..open]));
                }
                pieces.push(Piece::Slot(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                pieces.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    pieces
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn empty() -> Self {
        Self {
            templates: BTreeMap::new(),
        }
    }

    /// Adds or replaces a template.
    pub fn insert(&mut self, name: impl Into<String>, body: impl Into<String>) {
        self.templates.insert(name.into(), body.into());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.templates.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn placeholders(&self, name: &str) -> Result<BTreeSet<String>, LlmError> {
        let body = self
            .templates
            .get(name)
            .ok_or_else(|| LlmError::UnknownTemplate(name.to_string()))?;
        Ok(parse(body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.to_string()),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Validates the request and substitutes its variables.
    pub fn render(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        request.check_temperature()?;
        let body = self
            .templates
            .get(&request.template_name)
            .ok_or_else(|| LlmError::UnknownTemplate(request.template_name.clone()))?;
        let mut out = String::with_capacity(body.len());
        for piece in parse(body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match request.variables.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(LlmError::TemplateUnbound {
                            template: request.template_name.clone(),
                            placeholder: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_placeholders() {
        let lib = PromptLibrary::builtin();
        let want = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(lib.placeholders(DECOMPOSE).unwrap(), want(&["context", "query"]));
        assert_eq!(
            lib.placeholders(GENERATE_REWRITE).unwrap(),
            want(&["draft", "knowledge", "query", "unsupported_claims"])
        );
        assert_eq!(
            lib.placeholders(CAUSAL_VERIFICATION).unwrap(),
            want(&["cause", "dataset", "domain", "effect", "source_model"])
        );
    }

    #[test]
    fn literal_braces_survive() {
        let lib = PromptLibrary::builtin();
        let req = CompletionRequest::new(CAUSAL_VERIFICATION, 0.0, 64)
            .var("domain", "medicine")
            .var("dataset", "d")
            .var("source_model", "m")
            .var("cause", "high blood pressure")
            .var("effect", "stroke");
        let text = lib.render(&req).unwrap();
        assert!(text.contains("Correctness: {True / False}"));
        assert!(text.contains("- Cause: high blood pressure"));
        assert!(!text.contains("{cause}"));
    }

    #[test]
    fn unbound_and_unknown() {
        let lib = PromptLibrary::builtin();
        let req = CompletionRequest::new(SIMPLIFY, 0.0, 64).var("query", "q");
        assert!(matches!(lib.render(&req), Err(LlmError::TemplateUnbound { .. })));
        let req = CompletionRequest::new("nope", 0.0, 64);
        assert!(matches!(lib.render(&req), Err(LlmError::UnknownTemplate(_))));
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let mut lib = PromptLibrary::empty();
        lib.insert("t", "[{a}] [{b}]");
        let req = CompletionRequest::new("t", 0.0, 1).var("a", "{b}").var("b", "x");
        assert_eq!(lib.render(&req).unwrap(), "[{b}] [x]");
    }
}

use serde::{Deserialize, Serialize};

use crate::llm::{
    CompletionRequest, LlmClient, LlmError, GENERATE_NORMAL, GENERATE_REWRITE, GENERATE_STRICT,
    GENERATION_TEMPERATURE,
};
use crate::retrieval::{KnowledgeSet, KNOWLEDGE_CHAR_BUDGET};

pub const GENERATION_MAX_TOKENS: u32 = 512;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("rewrite mode needs at least one unsupported claim")]
    ModeMisuse,
    #[error("llm failure: {0}")]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GenerationMode {
    Normal,
    /// Only relations present in the knowledge may be asserted.
    Strict,
    /// Revise `draft`, removing or grounding `unsupported` claims.
    Rewrite { draft: String, unsupported: Vec<String> },
}

impl GenerationMode {
    pub fn template(&self) -> &'static str {
        match self {
            Self::Normal => GENERATE_NORMAL,
            Self::Strict => GENERATE_STRICT,
            Self::Rewrite { .. } => GENERATE_REWRITE,
        }
    }
}

pub fn generate(
    client: &dyn LlmClient,
    query: &str,
    knowledge: &KnowledgeSet,
    mode: &GenerationMode,
) -> Result<String, GenerationError> {
    if query.trim().is_empty() {
        return Err(GenerationError::EmptyQuery);
    }
    let mut req = CompletionRequest::new(mode.template(), GENERATION_TEMPERATURE, GENERATION_MAX_TOKENS)
        .var("query", query)
        .var("knowledge", knowledge.render(KNOWLEDGE_CHAR_BUDGET));
    if let GenerationMode::Rewrite { draft, unsupported } = mode {
        if unsupported.is_empty() {
            return Err(GenerationError::ModeMisuse);
        }
        let list = unsupported.iter().map(|c| format!("- {c}")).collect::<Vec<_>>().join("\n");
        req = req.var("draft", draft.as_str()).var("unsupported_claims", list);
    }
    Ok(client.complete(&req)?.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockClient, PromptLibrary, ABSTENTION};
    use std::sync::Arc;

    /// Follows the strict template's rule for empty knowledge.
    fn contract_mock() -> MockClient {
        MockClient::new(Arc::new(PromptLibrary::builtin()), |req| {
            if req.template_name == GENERATE_STRICT && req.get("knowledge") == Some("") {
                Ok(ABSTENTION.to_string())
            } else {
                Ok(format!("answer from {}", req.template_name))
            }
        })
    }

    #[test]
    fn strict_with_empty_knowledge_abstains() {
        let out = generate(&contract_mock(), "why?", &KnowledgeSet::default(), &GenerationMode::Strict).unwrap();
        assert_eq!(out, ABSTENTION);
        assert!(out.contains("insufficient retrieved evidence"));
    }

    #[test]
    fn rewrite_requires_claims() {
        let mode = GenerationMode::Rewrite {
            draft: "d".into(),
            unsupported: vec![],
        };
        assert!(matches!(
            generate(&contract_mock(), "q", &KnowledgeSet::default(), &mode),
            Err(GenerationError::ModeMisuse)
        ));
    }

    #[test]
    fn rewrite_passes_draft_and_list() {
        let m = contract_mock();
        let mode = GenerationMode::Rewrite {
            draft: "draft text".into(),
            unsupported: vec!["X causes Y.".into(), "Z.".into()],
        };
        generate(&m, "q", &KnowledgeSet::default(), &mode).unwrap();
        let req = &m.requests()[0];
        assert_eq!(req.get("draft"), Some("draft text"));
        assert_eq!(req.get("unsupported_claims"), Some("- X causes Y.\n- Z."));
        assert_eq!(req.temperature, GENERATION_TEMPERATURE);
    }

    #[test]
    fn normal_mode_uses_normal_template() {
        let m = contract_mock();
        assert_eq!(
            generate(&m, "q", &KnowledgeSet::default(), &GenerationMode::Normal).unwrap(),
            "answer from generate_normal"
        );
    }
}

use super::{CompletionRequest, LlmClient, LlmError, REFINE_TEMPERATURE};
use crate::agent::RefinementAction;

/// Which prompt form drives refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    /// Step-by-step instructions with guidelines.
    #[default]
    Structured,
    /// One-line instruction variant.
    Condensed,
}

const REFINE_MAX_TOKENS: u32 = 256;

/// Runs the action's rewriting prompt and parses its line contract:
/// simplify/expand yield exactly one line, decompose yields 2 to 4.
pub fn refine_query(
    client: &dyn LlmClient,
    query: &str,
    action: RefinementAction,
    style: PromptStyle,
) -> Result<Vec<String>, LlmError> {
    let template = match style {
        PromptStyle::Structured => action.name().to_string(),
        PromptStyle::Condensed => format!("{}_condensed", action.name()),
    };
    let request = CompletionRequest::new(template, REFINE_TEMPERATURE, REFINE_MAX_TOKENS)
        .var("query", query)
        .var("context", "");
    let response = client.complete(&request)?;
    parse_refinement(&response, action)
}

pub(crate) fn parse_refinement(
    response: &str,
    action: RefinementAction,
) -> Result<Vec<String>, LlmError> {
    let lines: Vec<String> = response
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let (ok, expected) = match action {
        RefinementAction::Decompose => ((2..=4).contains(&lines.len()), "2-4"),
        RefinementAction::Expand | RefinementAction::Simplify => (lines.len() == 1, "1"),
    };
    if ok {
        Ok(lines)
    } else {
        Err(LlmError::MalformedRefinement {
            action: action.name().to_string(),
            expected,
            got: lines.len(),
        })
    }
}

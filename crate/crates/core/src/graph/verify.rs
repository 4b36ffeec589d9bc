//! Optional LLM check of candidate cause-effect pairs before ingestion.

use serde::{Deserialize, Serialize};

use crate::llm::{CompletionRequest, LlmClient, LlmError, CAUSAL_VERIFICATION, REFINE_TEMPERATURE};
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationContext {
    pub domain: String,
    pub dataset: String,
    pub source_model: String,
}

impl Default for VerificationContext {
    fn default() -> Self {
        Self {
            domain: "general knowledge".into(),
            dataset: "unspecified".into(),
            source_model: "unspecified".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub correct: bool,
    /// The verifier flipped the direction.
    pub reoriented: bool,
    pub confidence: Option<String>,
    pub explanation: String,
}

pub fn verify_pair(
    client: &dyn LlmClient,
    ctx: &VerificationContext,
    cause: &str,
    effect: &str,
) -> Result<PairVerdict, LlmError> {
    let req = CompletionRequest::new(CAUSAL_VERIFICATION, REFINE_TEMPERATURE, 256)
        .var("domain", &ctx.domain)
        .var("dataset", &ctx.dataset)
        .var("source_model", &ctx.source_model)
        .var("cause", cause)
        .var("effect", effect);
    parse_verdict(&client.complete(&req)?, cause, effect)
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| {
        let l = l.trim().trim_start_matches(['-', '*', '•', ' ']);
        let (k, v) = l.split_once(':')?;
        k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
    })
}

/// Reads the structured verifier reply. `Correctness` is required; a
/// refined statement that names the effect first marks a reorientation.
pub fn parse_verdict(text: &str, cause: &str, effect: &str) -> Result<PairVerdict, LlmError> {
    let correctness = field(text, "Correctness")
        .ok_or_else(|| LlmError::Format("verifier reply lacks a Correctness line".into()))?;
    let correct = match correctness.trim_matches(|c: char| !c.is_alphabetic()).to_lowercase().as_str() {
        "true" | "yes" => true,
        "false" | "no" => false,
        other => return Err(LlmError::Format(format!("bad Correctness value {other:?}"))),
    };
    let reoriented = field(text, "Refined Causal Statement")
        .and_then(|s| {
            let s = normalize_label(s);
            let (c, e) = (normalize_label(cause), normalize_label(effect));
            Some(s.find(&e)? < s.find(&c)?)
        })
        .unwrap_or(false);
    Ok(PairVerdict {
        correct,
        reoriented,
        confidence: field(text, "Confidence").map(str::to_string),
        explanation: field(text, "Explanation").unwrap_or_default().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockClient, PromptLibrary};
    use std::sync::Arc;

    #[test]
    fn accepts_documented_example() {
        let reply = "Correctness: True\n\
                     Refined Causal Statement: \"High blood pressure causes stroke\"\n\
                     Confidence: High\n\
                     Explanation: Chronic hypertension is a risk factor for stroke.";
        let client = MockClient::new(Arc::new(PromptLibrary::builtin()), move |_| Ok(reply.into()));
        let v = verify_pair(&client, &VerificationContext::default(), "High blood pressure", "Stroke").unwrap();
        assert!(v.correct);
        assert!(!v.reoriented);
        assert_eq!(v.confidence.as_deref(), Some("High"));
    }

    #[test]
    fn detects_reorientation() {
        let reply = "Correctness: False\nRefined Causal Statement: \"stroke\" causes \"paralysis\"";
        let v = parse_verdict(reply, "paralysis", "stroke").unwrap();
        assert!(!v.correct);
        assert!(v.reoriented);
    }

    #[test]
    fn missing_correctness_is_an_error() {
        assert!(parse_verdict("Confidence: Low", "a", "b").is_err());
    }
}

//! Provider-agnostic completion interface.
//!
//! Three implementations share the [`LlmClient`] trait:
//!
//! - [`ProviderClient`]: JSON over HTTP with retry and backoff.
//! - [`MockClient`]: a scripted function of the request.
//! - [`CassetteClient`]: record/replay keyed by a request fingerprint, so
//!   tests and the acceptance suite never need a live provider.
//!
//! Requests name a template from the [`PromptLibrary`] plus the variables to
//! substitute; every client validates the request against the library
//! before doing anything else.

mod cassette;
mod mock;
mod prompts;
mod provider;
mod refine;

pub use cassette::{fingerprint, Cassette, CassetteClient, CassetteEntry, CassetteMode};
pub use mock::MockClient;
pub use prompts::{
    PromptLibrary, ABSTENTION, CAUSAL_VERIFICATION, DECOMPOSE, EXPAND, GENERATE_NORMAL,
    GENERATE_REWRITE, GENERATE_STRICT, SIMPLIFY,
};
pub use provider::{ProviderClient, ProviderConfig, WireSchema};
pub use refine::{refine_query, PromptStyle};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Decoding temperature for refinement and verification prompts.
pub const REFINE_TEMPERATURE: f64 = 0.0;
/// Decoding temperature for answer generation.
pub const GENERATION_TEMPERATURE: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no cassette entry for fingerprint {fingerprint} (template {template})")]
    MissingCassetteEntry { fingerprint: String, template: String },
    #[error("provider error {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("template {template:?} has unbound placeholder {{{placeholder}}}")]
    TemplateUnbound { template: String, placeholder: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("malformed refinement for {action}: expected {expected} line(s), got {got}")]
    MalformedRefinement {
        action: String,
        expected: &'static str,
        got: usize,
    },
    #[error("no provider configured for {0} mode")]
    NoProvider(&'static str),
    #[error("cassette io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cassette format: {0}")]
    Format(String),
    #[error("{0}")]
    Scripted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template_name: String,
    pub variables: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(template_name: impl Into<String>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            template_name: template_name.into(),
            variables: BTreeMap::new(),
            temperature,
            max_tokens,
        }
    }

    pub fn var(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.variables.insert(name.into(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.variables.get(name).map(String::as_str)
    }

    fn check_temperature(&self) -> Result<(), LlmError> {
        if (0.0..=2.0).contains(&self.temperature) {
            Ok(())
        } else {
            Err(LlmError::InvalidTemperature(self.temperature))
        }
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

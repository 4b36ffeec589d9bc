use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, LlmClient, LlmError, PromptLibrary};
use crate::http::{HttpTransport, UreqTransport};

/// Request/response shape spoken by the provider endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireSchema {
    /// `{"model","prompt","temperature","max_tokens"}` -> `{"text"}`
    Plain,
    /// OpenAI-style chat completions: one user message in,
    /// `choices[0].message.content` out.
    Chat,
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub schema: WireSchema,
    pub attempts: u32,
    pub backoff: Duration,
}

impl ProviderConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: model.into(),
            schema: WireSchema::Plain,
            attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct ProviderClient {
    config: ProviderConfig,
    prompts: Arc<PromptLibrary>,
    transport: Arc<dyn HttpTransport>,
}

impl ProviderClient {
    pub fn new(config: ProviderConfig, prompts: Arc<PromptLibrary>) -> Self {
        Self::with_transport(config, prompts, Arc::new(UreqTransport::default()))
    }

    pub fn with_transport(
        config: ProviderConfig,
        prompts: Arc<PromptLibrary>,
        transport: Arc<dyn HttpTransport>,
    ) -> Self {
        Self {
            config,
            prompts,
            transport,
        }
    }

    fn body(&self, prompt: &str, request: &CompletionRequest) -> Value {
        match self.config.schema {
            WireSchema::Plain => json!({
                "model": self.config.model,
                "prompt": prompt,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }),
            WireSchema::Chat => json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }),
        }
    }

    fn extract(&self, body: &str) -> Result<String, LlmError> {
        let v: Value = serde_json::from_str(body).map_err(|e| LlmError::ProviderError {
            status: 200,
            body: format!("unparseable response ({e}): {body}"),
        })?;
        let text = match self.config.schema {
            WireSchema::Plain => v.get("text"),
            WireSchema::Chat => v.pointer("/choices/0/message/content"),
        };
        text.and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::ProviderError {
                status: 200,
                body: format!("response missing text: {body}"),
            })
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

impl LlmClient for ProviderClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let prompt = self.prompts.render(request)?;
        let body = self.body(&prompt, request);
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(key) = &self.config.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let attempts = self.config.attempts.max(1);
        let mut last = LlmError::ProviderError {
            status: 0,
            body: "no attempt made".into(),
        };
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.transport.post_json(&self.config.url, &headers, &body) {
                Ok(resp) if resp.status == 200 => return self.extract(&resp.body),
                Ok(resp) => {
                    let retry = retryable(resp.status);
                    last = LlmError::ProviderError {
                        status: resp.status,
                        body: resp.body,
                    };
                    if !retry {
                        break;
                    }
                }
                Err(e) => {
                    last = LlmError::ProviderError {
                        status: 0,
                        body: e.to_string(),
                    }
                }
            }
            log::warn!("provider attempt {} of {attempts} failed: {last}", attempt + 1);
        }
        Err(last)
    }
}

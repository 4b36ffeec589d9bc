//! Model access selected from the environment.
//!
//! `MODE` picks one of three setups:
//!
//! - `replay` (default): answers come only from the cassette.
//! - `record`: the cassette is consulted first, misses go to the provider
//!   and are appended to the cassette file.
//! - `live`: every request goes to the provider.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use causeway_core::llm::{
    Cassette, CassetteClient, LlmClient, ProviderClient, ProviderConfig, PromptLibrary, WireSchema,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Record,
    Replay,
    Live,
}

impl Mode {
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var("MODE").ok().as_deref().map(str::trim) {
            None | Some("") | Some("replay") => Ok(Self::Replay),
            Some("record") => Ok(Self::Record),
            Some("live") => Ok(Self::Live),
            Some(other) => Err(CliError::Usage(format!(
                "MODE must be record, replay or live, got {other:?}"
            ))),
        }
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

fn provider(prompts: Arc<PromptLibrary>) -> Result<ProviderClient, CliError> {
    let url = env("CAUSEWAY_LLM_URL")
        .ok_or_else(|| CliError::Input("CAUSEWAY_LLM_URL is required in record and live modes".into()))?;
    let mut config = ProviderConfig::new(url, env("CAUSEWAY_LLM_MODEL").unwrap_or_else(|| "default".into()));
    config.api_key = env("CAUSEWAY_LLM_API_KEY");
    config.schema = match env("CAUSEWAY_LLM_SCHEMA").as_deref() {
        None | Some("plain") => WireSchema::Plain,
        Some("chat") => WireSchema::Chat,
        Some(other) => {
            return Err(CliError::Input(format!(
                "CAUSEWAY_LLM_SCHEMA must be plain or chat, got {other:?}"
            )))
        }
    };
    Ok(ProviderClient::new(config, prompts))
}

fn cassette_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| env("CAUSEWAY_CASSETTE").map(PathBuf::from))
}

/// Builds the client for the current `MODE`.
pub fn build(cassette_flag: Option<&Path>) -> Result<Arc<dyn LlmClient>, CliError> {
    let prompts = Arc::new(PromptLibrary::builtin());
    let mode = Mode::from_env()?;
    let load = |path: &Path| {
        Cassette::load(path).map_err(|e| CliError::Input(format!("cassette {}: {e}", path.display())))
    };
    Ok(match mode {
        Mode::Live => Arc::new(provider(prompts)?),
        Mode::Replay => {
            let path = cassette_path(cassette_flag).ok_or_else(|| {
                CliError::Input("replay mode needs a cassette: pass --cassette or set CAUSEWAY_CASSETTE".into())
            })?;
            Arc::new(CassetteClient::replay(prompts, load(&path)?))
        }
        Mode::Record => {
            let path = cassette_path(cassette_flag).ok_or_else(|| {
                CliError::Input("record mode needs a cassette: pass --cassette or set CAUSEWAY_CASSETTE".into())
            })?;
            let existing = if path.exists() { load(&path)? } else { Cassette::new() };
            let upstream = Arc::new(provider(prompts.clone())?);
            Arc::new(CassetteClient::record(prompts, existing, upstream).persist_to(path))
        }
    })
}

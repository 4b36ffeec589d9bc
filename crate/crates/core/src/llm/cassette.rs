use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, LlmClient, LlmError, PromptLibrary};

/// SHA-256 over the canonical JSON of (template, variables, temperature,
/// max_tokens). Variables are a sorted map, so insertion order never
/// matters.
pub fn fingerprint(request: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        template: &'a str,
        variables: &'a BTreeMap<String, String>,
        temperature: f64,
        max_tokens: u32,
    }
    let canonical = Canonical {
        template: &request.template_name,
        variables: &request.variables,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub template: String,
    pub response: String,
}

/// Fingerprint-indexed response store, persisted as JSON Lines sorted by
/// fingerprint.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        if !path.exists() {
            return Ok(Self::new());
        }
        Self::read_jsonl(BufReader::new(fs::File::open(path)?))
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LlmError> {
        let mut c = Self::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Format(format!("line {}: {e}", n + 1)))?;
            c.entries.insert(e.fingerprint.clone(), e);
        }
        Ok(c)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), LlmError> {
        for e in self.entries.values() {
            let line = serde_json::to_string(e).map_err(|e| LlmError::Format(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn insert(&mut self, entry: CassetteEntry) {
        self.entries.insert(entry.fingerprint.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Serve hits from the cassette, forward misses to the provider and
    /// store the answer.
    Record,
    /// Serve from the cassette only; a miss is an error.
    Replay,
}

/// Record/replay wrapper around an optional provider.
pub struct CassetteClient {
    mode: CassetteMode,
    prompts: Arc<PromptLibrary>,
    provider: Option<Arc<dyn LlmClient>>,
    cassette: Mutex<Cassette>,
    path: Option<PathBuf>,
    served: Mutex<Vec<(String, String)>>,
}

impl CassetteClient {
    pub fn replay(prompts: Arc<PromptLibrary>, cassette: Cassette) -> Self {
        Self {
            mode: CassetteMode::Replay,
            prompts,
            provider: None,
            cassette: Mutex::new(cassette),
            path: None,
            served: Mutex::new(Vec::new()),
        }
    }

    pub fn record(
        prompts: Arc<PromptLibrary>,
        cassette: Cassette,
        provider: Arc<dyn LlmClient>,
    ) -> Self {
        Self {
            mode: CassetteMode::Record,
            prompts,
            provider: Some(provider),
            cassette: Mutex::new(cassette),
            path: None,
            served: Mutex::new(Vec::new()),
        }
    }

    /// Attaches an optional provider in replay mode. Replay never calls it;
    /// this exists so tests can prove that.
    pub fn with_provider(mut self, provider: Arc<dyn LlmClient>) -> Self {
        self.provider = Some(provider);
        self
    }

    /// Persist the cassette to `path` after every recorded entry.
    pub fn persist_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    /// (fingerprint, template) of every request answered, in call order.
    pub fn served(&self) -> Vec<(String, String)> {
        self.served.lock().expect("served log poisoned").clone()
    }

    pub fn snapshot(&self) -> Cassette {
        self.cassette.lock().expect("cassette poisoned").clone()
    }
}

impl LlmClient for CassetteClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.prompts.render(request)?;
        let fp = fingerprint(request);
        let hit = self
            .cassette
            .lock()
            .expect("cassette poisoned")
            .get(&fp)
            .map(|e| e.response.clone());
        let response = match (hit, self.mode) {
            (Some(r), _) => r,
            (None, CassetteMode::Replay) => {
                return Err(LlmError::MissingCassetteEntry {
                    fingerprint: fp,
                    template: request.template_name.clone(),
                })
            }
            (None, CassetteMode::Record) => {
                let provider = self.provider.as_ref().ok_or(LlmError::NoProvider("record"))?;
                let response = provider.complete(request)?;
                // writes are serialized by the cassette lock
                let mut cassette = self.cassette.lock().expect("cassette poisoned");
                cassette.insert(CassetteEntry {
                    fingerprint: fp.clone(),
                    template: request.template_name.clone(),
                    response: response.clone(),
                });
                if let Some(path) = &self.path {
                    cassette.save(path)?;
                }
                response
            }
        };
        self.served
            .lock()
            .expect("served log poisoned")
            .push((fp, request.template_name.clone()));
        Ok(response)
    }
}

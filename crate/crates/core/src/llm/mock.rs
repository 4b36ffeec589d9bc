use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{CompletionRequest, LlmClient, LlmError, PromptLibrary};

type Script = dyn Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync;

/// Client whose answers come from a closure. Counts and logs every call.
pub struct MockClient {
    prompts: Arc<PromptLibrary>,
    script: Box<Script>,
    calls: AtomicUsize,
    log: Mutex<Vec<CompletionRequest>>,
}

impl MockClient {
    pub fn new<F>(prompts: Arc<PromptLibrary>, script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self {
            prompts,
            script: Box::new(script),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    /// Number of logged calls for one template.
    pub fn calls_to(&self, template: &str) -> usize {
        self.log
            .lock()
            .expect("mock log poisoned")
            .iter()
            .filter(|r| r.template_name == template)
            .count()
    }
}

impl LlmClient for MockClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.prompts.render(request)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("mock log poisoned").push(request.clone());
        (self.script)(request)
    }
}

use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use super::{Embedding, EmbeddingError, Encoder};
use crate::http::{HttpTransport, UreqTransport};

/// Encoder backed by an embedding service speaking
/// `POST {"texts": [..]}` -> `{"embeddings": [[..]]}`.
pub struct HttpEncoder {
    url: String,
    dimension: usize,
    transport: Arc<dyn HttpTransport>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

impl HttpEncoder {
    pub fn new(url: impl Into<String>, dimension: usize) -> Self {
        Self::with_transport(url, dimension, Arc::new(UreqTransport::default()))
    }

    pub fn with_transport(
        url: impl Into<String>,
        dimension: usize,
        transport: Arc<dyn HttpTransport>,
    ) -> Self {
        Self {
            url: url.into(),
            dimension,
            transport,
        }
    }
}

impl Encoder for HttpEncoder {
    fn name(&self) -> String {
        format!("http:{}", self.url)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| EmbeddingError::RemoteEncoderFailure("empty response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let resp = self
            .transport
            .post_json(&self.url, &[], &json!({ "texts": texts }))
            .map_err(|e| EmbeddingError::RemoteEncoderFailure(e.to_string()))?;
        if resp.status != 200 {
            return Err(EmbeddingError::RemoteEncoderFailure(format!(
                "status {}: {}",
                resp.status, resp.body
            )));
        }
        let parsed: EmbedResponse = serde_json::from_str(&resp.body)
            .map_err(|e| EmbeddingError::RemoteEncoderFailure(format!("bad body: {e}")))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(EmbeddingError::RemoteEncoderFailure(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                parsed.embeddings.len()
            )));
        }
        parsed
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.dimension,
                        actual: v.len(),
                    });
                }
                Ok(Embedding::new(v)?.normalized())
            })
            .collect()
    }
}

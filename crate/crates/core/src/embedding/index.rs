use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{cosine, Embedding, EmbeddingError, Encoder};

/// A retrievable passage. The embedding is carried in memory and in the
/// index file but left out of traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
    #[serde(skip, default = "empty_embedding")]
    pub embedding: Embedding,
}

fn empty_embedding() -> Embedding {
    Embedding::zeros(0)
}

/// One line of a passage file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassageRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
}

/// First line of a persisted index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub dimension: usize,
    pub encoder: String,
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    id: String,
    embedding: Vec<f64>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPassage {
    pub id: String,
    pub score: f64,
}

/// Exact full-scan cosine index.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dimension: usize,
    encoder: String,
    passages: Vec<Passage>,
    ids: HashSet<String>,
}

impl VectorIndex {
    pub fn new(dimension: usize, encoder: impl Into<String>) -> Self {
        Self {
            dimension,
            encoder: encoder.into(),
            passages: Vec::new(),
            ids: HashSet::new(),
        }
    }

    /// Embeds every record with `encoder`.
    pub fn build(
        encoder: &dyn Encoder,
        records: impl IntoIterator<Item = PassageRecord>,
    ) -> Result<Self, EmbeddingError> {
        let mut index = Self::new(encoder.dimension(), encoder.name());
        for r in records {
            if r.text.trim().is_empty() {
                return Err(EmbeddingError::EmptyPassage(r.id));
            }
            let embedding = encoder.embed(&r.text)?.normalized();
            index.insert(Passage {
                id: r.id,
                text: r.text,
                source: r.source,
                embedding,
            })?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, passage: Passage) -> Result<(), EmbeddingError> {
        if passage.text.trim().is_empty() {
            return Err(EmbeddingError::EmptyPassage(passage.id));
        }
        if passage.embedding.dimension() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                actual: passage.embedding.dimension(),
            });
        }
        if !self.ids.insert(passage.id.clone()) {
            return Err(EmbeddingError::DuplicatePassage(passage.id));
        }
        self.passages.push(passage);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.passages.iter().find(|p| p.id == id)
    }

    /// The `k` most similar passages, score descending, ties by ascending id.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredPassage>, EmbeddingError> {
        if query.dimension() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let mut scored = self
            .passages
            .iter()
            .map(|p| {
                Ok(ScoredPassage {
                    id: p.id.clone(),
                    score: cosine(query, &p.embedding)?,
                })
            })
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        scored.sort_by(rank_order);
        scored.truncate(k);
        Ok(scored)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        let header = IndexHeader {
            dimension: self.dimension,
            encoder: self.encoder.clone(),
        };
        writeln!(out, "{}", to_json(&header)?)?;
        for p in &self.passages {
            let line = IndexLine {
                id: p.id.clone(),
                embedding: p.embedding.values().to_vec(),
                text: p.text.clone(),
                source: p.source.clone(),
            };
            writeln!(out, "{}", to_json(&line)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, EmbeddingError> {
        let mut lines = input.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| EmbeddingError::Format("missing index header".into()))??;
        let header: IndexHeader = serde_json::from_str(&header_line)
            .map_err(|e| EmbeddingError::Format(format!("header: {e}")))?;
        let mut index = Self::new(header.dimension, header.encoder);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: IndexLine = serde_json::from_str(&line)
                .map_err(|e| EmbeddingError::Format(format!("line {}: {e}", n + 2)))?;
            index.insert(Passage {
                id: rec.id,
                text: rec.text,
                source: rec.source,
                embedding: Embedding::new(rec.embedding)?,
            })?;
        }
        Ok(index)
    }
}

pub(crate) fn rank_order(a: &ScoredPassage, b: &ScoredPassage) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, EmbeddingError> {
    serde_json::to_string(v).map_err(|e| EmbeddingError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEncoder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, text: &str) -> PassageRecord {
        PassageRecord {
            id: id.into(),
            text: text.into(),
            source: "test".into(),
        }
    }

    #[test]
    fn self_similarity_top1() {
        let enc = HashingEncoder::default();
        let idx = VectorIndex::build(
            &enc,
            vec![
                rec("p1", "smoking causes lung cancer"),
                rec("p2", "exercise improves sleep quality"),
            ],
        )
        .unwrap();
        let q = enc.embed("exercise improves sleep quality").unwrap();
        let hits = idx.search(&q, 1).unwrap();
        assert_eq!(hits[0].id, "p2");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_index() {
        let enc = HashingEncoder::default();
        let idx = VectorIndex::build(&enc, vec![rec("a", "one"), rec("b", "two")]).unwrap();
        assert_eq!(idx.search(&enc.embed("one").unwrap(), 10).unwrap().len(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let idx = VectorIndex::new(384, "x");
        let q = Embedding::zeros(3);
        assert!(matches!(
            idx.search(&q, 1),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_and_empty_rejected() {
        let enc = HashingEncoder::default();
        assert!(matches!(
            VectorIndex::build(&enc, vec![rec("a", "x"), rec("a", "y")]),
            Err(EmbeddingError::DuplicatePassage(_))
        ));
        assert!(matches!(
            VectorIndex::build(&enc, vec![rec("a", "  ")]),
            Err(EmbeddingError::EmptyPassage(_))
        ));
    }

    #[test]
    fn matches_full_scan_on_random_passages() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut idx = VectorIndex::new(8, "random");
        for i in 0..50 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            idx.insert(Passage {
                id: format!("p{i:02}"),
                text: "t".into(),
                source: String::new(),
                embedding: Embedding::new(v).unwrap(),
            })
            .unwrap();
        }
        let q = Embedding::new((0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // oracle: score every passage independently, sort the full list
        let mut all: Vec<(String, f64)> = idx
            .passages()
            .iter()
            .map(|p| {
                let dot: f64 = p.embedding.values().iter().zip(q.values()).map(|(a, b)| a * b).sum();
                (p.id.clone(), dot / (p.embedding.norm() * q.norm()))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<String> = idx.search(&q, 10).unwrap().into_iter().map(|h| h.id).collect();
        let want: Vec<String> = all.into_iter().take(10).map(|p| p.0).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn persistence_round_trip() {
        let enc = HashingEncoder::default();
        let idx = VectorIndex::build(&enc, vec![rec("a", "alpha beta"), rec("b", "gamma")]).unwrap();
        let mut buf = Vec::new();
        idx.write_jsonl(&mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with("{\"dimension\":384,\"encoder\":\"hashing-tf-384\"}"));
        let back = VectorIndex::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.passages(), idx.passages());
        assert_eq!(back.encoder_name(), idx.encoder_name());
    }
}

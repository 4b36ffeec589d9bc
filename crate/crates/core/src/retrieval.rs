//! Dual-path retrieval: semantic top-k passages plus causal-graph paths,
//! merged into one knowledge set with provenance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingError, Encoder, Passage, VectorIndex};
use crate::graph::{CausalGraph, CausalPath, GraphError, NodeId};
use crate::text::query_terms;

/// Prompt budget for rendered knowledge, in characters.
pub const KNOWLEDGE_CHAR_BUDGET: usize = 4000;
pub const MAX_SUBQUERIES: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("{0} subqueries given, at most {MAX_SUBQUERIES} allowed")]
    TooManySubqueries(usize),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Semantic,
    CausalPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub passage: Option<Passage>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<CausalPath>,
    pub rendered_text: String,
    /// Cosine for passages, weakest-edge confidence for paths.
    pub score: f64,
}

impl KnowledgeItem {
    pub fn semantic(passage: Passage, score: f64) -> Self {
        Self {
            origin: Origin::Semantic,
            rendered_text: passage.text.clone(),
            passage: Some(passage),
            path: None,
            score,
        }
    }

    pub fn causal(path: CausalPath) -> Self {
        Self {
            origin: Origin::CausalPath,
            rendered_text: path.render(),
            score: path.min_confidence,
            passage: None,
            path: Some(path),
        }
    }

    /// Passage id, or the arrow-joined node sequence for paths.
    pub fn identity(&self) -> String {
        match (&self.passage, &self.path) {
            (Some(p), _) => p.id.clone(),
            (_, Some(path)) => path.nodes.iter().map(NodeId::as_str).collect::<Vec<_>>().join(" → "),
            _ => String::new(),
        }
    }
}

fn item_order(a: &KnowledgeItem, b: &KnowledgeItem) -> Ordering {
    a.origin.cmp(&b.origin).then_with(|| match (&a.path, &b.path) {
        (Some(pa), Some(pb)) => crate::graph::path_order(pa, pb),
        _ => b.score.total_cmp(&a.score).then_with(|| a.identity().cmp(&b.identity())),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    pub query: String,
    pub seeds: Vec<NodeId>,
    pub items: Vec<KnowledgeItem>,
}

impl KnowledgeSet {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn semantic(&self) -> impl Iterator<Item = &KnowledgeItem> {
        self.items.iter().filter(|i| i.origin == Origin::Semantic)
    }

    pub fn paths(&self) -> impl Iterator<Item = &CausalPath> {
        self.items.iter().filter_map(|i| i.path.as_ref())
    }

    /// Dedups by (origin, identity) keeping the highest score, then sorts.
    fn from_items(query: String, seeds: BTreeSet<NodeId>, items: Vec<KnowledgeItem>) -> Self {
        let mut best: BTreeMap<(Origin, String), KnowledgeItem> = BTreeMap::new();
        for item in items {
            let key = (item.origin, item.identity());
            match best.get(&key) {
                Some(prev) if prev.score >= item.score => {}
                _ => {
                    best.insert(key, item);
                }
            }
        }
        let mut items: Vec<KnowledgeItem> = best.into_values().collect();
        items.sort_by(item_order);
        Self {
            query,
            seeds: seeds.into_iter().collect(),
            items,
        }
    }

    /// Every item still checks out against the structures it came from.
    pub fn validate(&self, graph: &CausalGraph, index: &VectorIndex) -> bool {
        self.items.iter().all(|item| match (item.origin, &item.passage, &item.path) {
            (Origin::Semantic, Some(p), None) => index.get(&p.id).is_some_and(|q| q.text == p.text),
            (Origin::CausalPath, None, Some(path)) => path.validate(graph),
            _ => false,
        })
    }

    /// Numbered knowledge block for prompts. When over `budget` characters,
    /// the lowest-scoring items (latest first among ties) are dropped.
    pub fn render(&self, budget: usize) -> String {
        let lines: Vec<String> = self.items.iter().map(|i| i.rendered_text.clone()).collect();
        let mut keep: Vec<bool> = vec![true; lines.len()];
        let mut drop_order: Vec<usize> = (0..lines.len()).collect();
        drop_order.sort_by(|&a, &b| {
            self.items[a]
                .score
                .total_cmp(&self.items[b].score)
                .then_with(|| b.cmp(&a))
        });
        let cost = |keep: &[bool]| -> usize {
            keep.iter()
                .zip(&lines)
                .filter(|(k, _)| **k)
                .map(|(_, l)| l.chars().count() + 1)
                .sum()
        };
        let mut drops = drop_order.into_iter();
        while cost(&keep) > budget {
            match drops.next() {
                Some(i) => keep[i] = false,
                None => break,
            }
        }
        lines
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(l, _)| format!("- {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: usize,
    pub max_hops: usize,
    pub max_paths: usize,
    pub theta_align: f64,
    pub max_seeds: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: 5,
            max_hops: 3,
            max_paths: 20,
            theta_align: 0.55,
            max_seeds: 5,
        }
    }
}

fn gather(
    query: &str,
    graph: &CausalGraph,
    index: &VectorIndex,
    encoder: &dyn Encoder,
    params: &RetrievalParams,
    seeds: &mut BTreeSet<NodeId>,
    items: &mut Vec<KnowledgeItem>,
) -> Result<(), RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let embedding = match encoder.embed(query) {
        Ok(e) => e,
        Err(EmbeddingError::EmptyText) => return Err(RetrievalError::EmptyQuery),
        Err(e) => return Err(e.into()),
    };
    if !index.is_empty() {
        for hit in index.search(&embedding, params.k)? {
            let passage = index.get(&hit.id).expect("search returns indexed ids").clone();
            items.push(KnowledgeItem::semantic(passage, hit.score));
        }
    }
    let aligned = graph.align_query(Some(&embedding), &query_terms(query), params.theta_align, params.max_seeds);
    for path in graph.traverse(&aligned, params.max_hops, params.max_paths)? {
        items.push(KnowledgeItem::causal(path));
    }
    seeds.extend(aligned);
    Ok(())
}

pub fn retrieve(
    query: &str,
    graph: &CausalGraph,
    index: &VectorIndex,
    encoder: &dyn Encoder,
    params: &RetrievalParams,
) -> Result<KnowledgeSet, RetrievalError> {
    let (mut seeds, mut items) = (BTreeSet::new(), Vec::new());
    gather(query, graph, index, encoder, params, &mut seeds, &mut items)?;
    Ok(KnowledgeSet::from_items(query.to_string(), seeds, items))
}

/// Retrieves for each subquery and unions the results; duplicates keep
/// their best score.
pub fn subquery_merge(
    subqueries: &[String],
    graph: &CausalGraph,
    index: &VectorIndex,
    encoder: &dyn Encoder,
    params: &RetrievalParams,
) -> Result<KnowledgeSet, RetrievalError> {
    if subqueries.is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    if subqueries.len() > MAX_SUBQUERIES {
        return Err(RetrievalError::TooManySubqueries(subqueries.len()));
    }
    let (mut seeds, mut items) = (BTreeSet::new(), Vec::new());
    for q in subqueries {
        gather(q, graph, index, encoder, params, &mut seeds, &mut items)?;
    }
    Ok(KnowledgeSet::from_items(subqueries.join("\n"), seeds, items))
}

//! Retrieval and answer-quality metrics.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Encoder};
use crate::retrieval::{KnowledgeItem, KnowledgeSet, Origin};
use crate::text::{contains_phrase, normalize_label, split_sentences, tokenize};

pub type GoldEdges = BTreeSet<(String, String)>;

/// Normalizes a list of (cause, effect) label pairs.
pub fn gold_edge_set(edges: &[(String, String)]) -> GoldEdges {
    edges.iter().map(|(c, e)| (normalize_label(c), normalize_label(e))).collect()
}

fn item_on_gold(item: &KnowledgeItem, gold: &GoldEdges) -> bool {
    match (item.origin, &item.path, &item.passage) {
        (Origin::CausalPath, Some(path), _) => path
            .edges()
            .all(|(c, e)| gold.contains(&(c.as_str().to_string(), e.as_str().to_string()))),
        (Origin::Semantic, _, Some(p)) => gold
            .iter()
            .any(|(c, e)| contains_phrase(&p.text, c) && contains_phrase(&p.text, e)),
        _ => false,
    }
}

/// Share of retrieved items lying on the gold graph; 0.0 for no items.
pub fn crc(retrieved: &KnowledgeSet, gold: &GoldEdges) -> f64 {
    if retrieved.is_empty() {
        return 0.0;
    }
    let hits = retrieved.items.iter().filter(|i| item_on_gold(i, gold)).count();
    hits as f64 / retrieved.len() as f64
}

/// Mean hop count of retrieved paths; 0.0 without paths.
pub fn ccd(retrieved: &KnowledgeSet) -> f64 {
    let hops: Vec<usize> = retrieved.paths().map(|p| p.hops).collect();
    if hops.is_empty() {
        0.0
    } else {
        hops.iter().sum::<usize>() as f64 / hops.len() as f64
    }
}

fn sim(encoder: &dyn Encoder, a: &str, b: &str) -> f64 {
    match (encoder.embed(a), encoder.embed(b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y).unwrap_or(0.0).max(0.0),
        _ => 0.0,
    }
}

/// Clamped cosine between the original and refined query.
pub fn srs(original: &str, refined: &str, encoder: &dyn Encoder) -> f64 {
    sim(encoder, original, refined)
}

/// Best [`srs`] over several refined queries (decomposition).
pub fn srs_multi(original: &str, refined: &[String], encoder: &dyn Encoder) -> f64 {
    refined.iter().map(|r| srs(original, r, encoder)).fold(0.0, f64::max)
}

/// Mean over answer sentences of the best cosine to any knowledge item.
pub fn groundedness(answer: &str, knowledge: &KnowledgeSet, encoder: &dyn Encoder) -> f64 {
    let sentences = split_sentences(answer);
    if knowledge.is_empty() || sentences.is_empty() {
        return 0.0;
    }
    let items: Vec<_> = knowledge
        .items
        .iter()
        .filter_map(|i| encoder.embed(&i.rendered_text).ok())
        .collect();
    let total: f64 = sentences
        .iter()
        .map(|s| match encoder.embed(s) {
            Ok(e) => items
                .iter()
                .map(|i| cosine(&e, i).unwrap_or(0.0).max(0.0))
                .fold(0.0, f64::max),
            Err(_) => 0.0,
        })
        .sum();
    total / sentences.len() as f64
}

/// Mean clamped cosine between the query and each knowledge item.
pub fn context_relevance(query: &str, knowledge: &KnowledgeSet, encoder: &dyn Encoder) -> f64 {
    if knowledge.is_empty() {
        return 0.0;
    }
    let Ok(q) = encoder.embed(query) else {
        return 0.0;
    };
    let total: f64 = knowledge
        .items
        .iter()
        .map(|i| match encoder.embed(&i.rendered_text) {
            Ok(e) => cosine(&q, &e).unwrap_or(0.0).max(0.0),
            Err(_) => 0.0,
        })
        .sum();
    total / knowledge.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectnessMode {
    ExactChoice,
    TokenF1 { threshold: f64 },
}

impl Default for CorrectnessMode {
    fn default() -> Self {
        Self::TokenF1 { threshold: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correctness {
    pub correct: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Bag-of-tokens precision, recall and F1 (multiset overlap).
pub fn token_prf(predicted: &str, gold: &str) -> (f64, f64, f64) {
    let (p, g) = (tokenize(predicted), tokenize(gold));
    if p.is_empty() || g.is_empty() {
        let same = p.is_empty() && g.is_empty();
        let v = if same { 1.0 } else { 0.0 };
        return (v, v, v);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return (0.0, 0.0, 0.0);
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    (precision, recall, 2.0 * precision * recall / (precision + recall))
}

pub fn answer_correct(predicted: &str, gold: &str, mode: CorrectnessMode) -> Correctness {
    match mode {
        CorrectnessMode::ExactChoice => {
            let hit = normalize_label(predicted) == normalize_label(gold);
            let v = if hit { 1.0 } else { 0.0 };
            Correctness {
                correct: hit,
                precision: v,
                recall: v,
                f1: v,
            }
        }
        CorrectnessMode::TokenF1 { threshold } => {
            let (precision, recall, f1) = token_prf(predicted, gold);
            Correctness {
                correct: f1 >= threshold,
                precision,
                recall,
                f1,
            }
        }
    }
}

//! Directed causal knowledge graph.
//!
//! Nodes are identified by their normalized label, so the same surface text
//! always lands on the same node. Edges are `(cause, effect, relation)`
//! triples; a duplicate triple keeps whichever copy has the higher
//! confidence. Cycles are allowed: traversal only ever follows simple paths
//! of bounded length.

mod traverse;
mod verify;

pub use traverse::{CausalPath, TraversalOptions};
pub(crate) use traverse::path_order;
pub use verify::{parse_verdict, verify_pair, PairVerdict, VerificationContext};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedding, EmbeddingError, Encoder};
use crate::text::{contains_phrase, normalize_label};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("self-loop: {0:?} cannot cause itself")]
    SelfLoop(String),
    #[error("empty node label")]
    EmptyLabel,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("unknown seed node {0:?}")]
    UnknownSeed(String),
    #[error("edge references unknown node {0:?}")]
    DanglingEdge(String),
    #[error("node embedding must be unit-norm, got norm {0}")]
    NonUnitEmbedding(f64),
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("graph io: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph format: {0}")]
    Format(String),
}

/// Stable node identifier: the node's normalized label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn from_label(raw: &str) -> Result<Self, GraphError> {
        let label = normalize_label(raw);
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalNode {
    pub id: NodeId,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTriple {
    pub cause: NodeId,
    pub effect: NodeId,
    pub relation: String,
    pub confidence: f64,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub verified: bool,
}

/// One line of a triple file. Unknown keys are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub cause: String,
    pub effect: String,
    #[serde(default = "default_relation")]
    pub relation: String,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub verified: bool,
}

fn default_relation() -> String {
    "causes".to_string()
}

fn default_confidence() -> f64 {
    1.0
}

impl TripleRecord {
    pub fn new(cause: &str, effect: &str, relation: &str, confidence: f64) -> Self {
        Self {
            cause: cause.into(),
            effect: effect.into(),
            relation: relation.into(),
            confidence,
            source: String::new(),
            verified: false,
        }
    }
}

type EdgeKey = (NodeId, NodeId, String);

#[derive(Debug, Clone, Default)]
pub struct CausalGraph {
    nodes: BTreeMap<NodeId, CausalNode>,
    edges: BTreeMap<EdgeKey, CausalTriple>,
    forward: BTreeMap<NodeId, BTreeSet<NodeId>>,
    reverse: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<CausalNode>,
    edges: Vec<CausalTriple>,
}

impl CausalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a triple, creating endpoint nodes on demand. Returns `true`
    /// when the graph changed.
    pub fn add_triple(&mut self, record: TripleRecord) -> Result<bool, GraphError> {
        let cause = NodeId::from_label(&record.cause)?;
        let effect = NodeId::from_label(&record.effect)?;
        if cause == effect {
            return Err(GraphError::SelfLoop(cause.0));
        }
        if !(0.0..=1.0).contains(&record.confidence) {
            return Err(GraphError::InvalidConfidence(record.confidence));
        }
        let relation = {
            let r = normalize_label(&record.relation);
            if r.is_empty() {
                default_relation()
            } else {
                r
            }
        };
        let key = (cause.clone(), effect.clone(), relation.clone());
        if let Some(existing) = self.edges.get(&key) {
            if existing.confidence >= record.confidence {
                return Ok(false);
            }
        }
        self.ensure_node(&cause);
        self.ensure_node(&effect);
        self.forward.entry(cause.clone()).or_default().insert(effect.clone());
        self.reverse.entry(effect.clone()).or_default().insert(cause.clone());
        self.edges.insert(
            key,
            CausalTriple {
                cause,
                effect,
                relation,
                confidence: record.confidence,
                source: record.source,
                verified: record.verified,
            },
        );
        Ok(true)
    }

    fn ensure_node(&mut self, id: &NodeId) {
        self.nodes.entry(id.clone()).or_insert_with(|| CausalNode {
            id: id.clone(),
            label: id.0.clone(),
            embedding: None,
        });
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CausalNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&CausalNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Edges in (cause, effect, relation) order.
    pub fn edges(&self) -> impl Iterator<Item = &CausalTriple> {
        self.edges.values()
    }

    pub fn successors(&self, id: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.forward.get(id).into_iter().flatten()
    }

    pub fn predecessors(&self, id: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.reverse.get(id).into_iter().flatten()
    }

    pub fn has_edge(&self, cause: &NodeId, effect: &NodeId) -> bool {
        self.forward.get(cause).is_some_and(|s| s.contains(effect))
    }

    /// Strongest edge between two nodes: highest confidence, then relation.
    pub fn best_edge(&self, cause: &NodeId, effect: &NodeId) -> Option<&CausalTriple> {
        let lo = (cause.clone(), effect.clone(), String::new());
        self.edges
            .range(lo..)
            .take_while(|((c, e, _), _)| c == cause && e == effect)
            .map(|(_, t)| t)
            .fold(None, |best: Option<&CausalTriple>, t| match best {
                Some(b) if b.confidence >= t.confidence => Some(b),
                _ => Some(t),
            })
    }

    /// Sub-graph containing only verified edges.
    pub fn verified_only(&self) -> CausalGraph {
        let mut g = CausalGraph::new();
        for t in self.edges.values().filter(|t| t.verified) {
            g.insert_triple_unchecked(t.clone());
        }
        for (id, n) in &self.nodes {
            if let Some(node) = g.nodes.get_mut(id) {
                node.embedding = n.embedding.clone();
            }
        }
        g
    }

    fn insert_triple_unchecked(&mut self, t: CausalTriple) {
        self.ensure_node(&t.cause);
        self.ensure_node(&t.effect);
        self.forward.entry(t.cause.clone()).or_default().insert(t.effect.clone());
        self.reverse.entry(t.effect.clone()).or_default().insert(t.cause.clone());
        self.edges
            .insert((t.cause.clone(), t.effect.clone(), t.relation.clone()), t);
    }

    /// Attaches a unit-norm label embedding to every node.
    pub fn embed_nodes(&mut self, encoder: &dyn Encoder) -> Result<(), GraphError> {
        for node in self.nodes.values_mut() {
            node.embedding = Some(encoder.embed(&node.label)?.normalized());
        }
        Ok(())
    }

    /// Nodes whose label matches `raw`: the exact normalized label if such a
    /// node exists, otherwise every node whose label occurs in `raw` as a
    /// whole-word phrase.
    pub fn nodes_matching(&self, raw: &str) -> Vec<NodeId> {
        let label = normalize_label(raw);
        if label.is_empty() {
            return Vec::new();
        }
        if let Some((id, _)) = self.nodes.get_key_value(&NodeId(label.clone())) {
            return vec![id.clone()];
        }
        self.nodes
            .keys()
            .filter(|id| contains_phrase(&label, &id.0))
            .cloned()
            .collect()
    }

    /// Seed nodes for a query: lexical phrase matches against `query_terms`
    /// or label-embedding cosine at least `theta_align`. Ordered by cosine
    /// descending, ties by id.
    pub fn align_query(
        &self,
        query_embedding: Option<&Embedding>,
        query_terms: &[String],
        theta_align: f64,
        max_seeds: usize,
    ) -> Vec<NodeId> {
        let mut hits: Vec<(f64, &NodeId)> = Vec::new();
        for (id, node) in &self.nodes {
            let lexical = query_terms
                .iter()
                .any(|term| contains_phrase(term, &node.label) || contains_phrase(&node.label, term));
            let sim = match (query_embedding, &node.embedding) {
                (Some(q), Some(e)) => cosine(q, e).unwrap_or(0.0),
                _ => 0.0,
            };
            let semantic = query_embedding.is_some() && node.embedding.is_some() && sim >= theta_align;
            if lexical || semantic {
                hits.push((sim, id));
            }
        }
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        hits.into_iter().take(max_seeds).map(|(_, id)| id.clone()).collect()
    }

    /// Whether a directed path of 1..=max_hops edges leads from a node
    /// matching `cause` to a node matching `effect`.
    pub fn entails(&self, cause: &str, effect: &str, max_hops: usize) -> bool {
        let targets: BTreeSet<NodeId> = self.nodes_matching(effect).into_iter().collect();
        if targets.is_empty() {
            return false;
        }
        self.nodes_matching(cause)
            .iter()
            .any(|src| self.reaches_any(src, &targets, max_hops))
    }

    fn reaches_any(&self, src: &NodeId, targets: &BTreeSet<NodeId>, max_hops: usize) -> bool {
        let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
        let mut queue: VecDeque<(&NodeId, usize)> = VecDeque::from([(src, 0)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth == max_hops {
                continue;
            }
            for next in self.successors(node) {
                if targets.contains(next) {
                    return true;
                }
                if seen.insert(next) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
        false
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), GraphError> {
        let file = GraphFile {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
        };
        serde_json::to_writer(out, &file).map_err(|e| GraphError::Format(e.to_string()))
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_reader(input).map_err(|e| GraphError::Format(e.to_string()))?;
        let mut g = CausalGraph::new();
        for n in file.nodes {
            if n.id.0.is_empty() {
                return Err(GraphError::EmptyLabel);
            }
            if let Some(e) = &n.embedding {
                let norm = e.norm();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(GraphError::NonUnitEmbedding(norm));
                }
            }
            g.nodes.insert(n.id.clone(), n);
        }
        for t in file.edges {
            for end in [&t.cause, &t.effect] {
                if !g.nodes.contains_key(end) {
                    return Err(GraphError::DanglingEdge(end.0.clone()));
                }
            }
            if t.cause == t.effect {
                return Err(GraphError::SelfLoop(t.cause.0));
            }
            if !(0.0..=1.0).contains(&t.confidence) {
                return Err(GraphError::InvalidConfidence(t.confidence));
            }
            g.insert_triple_unchecked(t);
        }
        Ok(g)
    }
}

/// Parses a JSON Lines triple file. Blank lines are skipped.
pub fn read_triples<R: BufRead>(input: R) -> Result<Vec<TripleRecord>, GraphError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(&line)
            .map_err(|e| GraphError::Format(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DIMENSION;

    fn chain() -> CausalGraph {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("A", "B", "causes", 0.9)).unwrap();
        g.add_triple(TripleRecord::new("B", "C", "causes", 0.8)).unwrap();
        g
    }

    #[test]
    fn add_creates_nodes() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("smoking", "lung cancer", "causes", 0.9))
            .unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn duplicate_keeps_higher_confidence() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("smoking", "lung cancer", "causes", 0.9))
            .unwrap();
        let changed = g
            .add_triple(TripleRecord::new("Smoking", "Lung  cancer.", "causes", 0.7))
            .unwrap();
        assert!(!changed);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges().next().unwrap().confidence, 0.9);
        g.add_triple(TripleRecord::new("smoking", "lung cancer", "causes", 0.95))
            .unwrap();
        assert_eq!(g.edges().next().unwrap().confidence, 0.95);
    }

    #[test]
    fn rejects_bad_triples() {
        let mut g = CausalGraph::new();
        assert!(matches!(
            g.add_triple(TripleRecord::new("x", "x", "causes", 1.0)),
            Err(GraphError::SelfLoop(_))
        ));
        assert!(matches!(
            g.add_triple(TripleRecord::new(" ", "x", "causes", 1.0)),
            Err(GraphError::EmptyLabel)
        ));
        assert!(matches!(
            g.add_triple(TripleRecord::new("a", "b", "causes", 1.5)),
            Err(GraphError::InvalidConfidence(_))
        ));
        assert!(g.is_empty());
    }

    #[test]
    fn reverse_index_is_transpose() {
        let mut g = chain();
        g.add_triple(TripleRecord::new("C", "A", "causes", 0.5)).unwrap();
        g.add_triple(TripleRecord::new("A", "C", "worsens", 0.5)).unwrap();
        for (src, dsts) in &g.forward {
            for d in dsts {
                assert!(g.reverse[d].contains(src));
            }
        }
        for (dst, srcs) in &g.reverse {
            for s in srcs {
                assert!(g.forward[s].contains(dst));
            }
        }
    }

    #[test]
    fn align_lexical() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("diabetes", "kidney damage", "causes", 1.0))
            .unwrap();
        g.add_triple(TripleRecord::new("smoking", "lung cancer", "causes", 1.0))
            .unwrap();
        let terms = crate::text::query_terms("does diabetes damage kidneys");
        let seeds = g.align_query(None, &terms, 0.55, 5);
        // "kidney damage" contains the term "damage" as a word
        assert_eq!(
            seeds,
            vec![NodeId::from_label("diabetes").unwrap(), NodeId::from_label("kidney damage").unwrap()]
        );
    }

    #[test]
    fn align_unreachable_threshold() {
        let enc = crate::embedding::HashingEncoder::default();
        let mut g = chain();
        g.embed_nodes(&enc).unwrap();
        let q = enc.embed("weather forecast tomorrow").unwrap();
        let terms = crate::text::query_terms("weather forecast tomorrow");
        assert!(g.align_query(Some(&q), &terms, 1.0 + 1e-9, 5).is_empty());
    }

    #[test]
    fn align_semantic_matches_brute_force_scan() {
        // five nodes with hand-set embeddings in a 4-d space
        let vecs = [
            ("n1", [1.0, 0.0, 0.0, 0.0]),
            ("n2", [0.8, 0.6, 0.0, 0.0]),
            ("n3", [0.0, 1.0, 0.0, 0.0]),
            ("n4", [0.6, 0.0, 0.8, 0.0]),
            ("n5", [0.0, 0.0, 0.0, 1.0]),
        ];
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("n1", "n2", "causes", 1.0)).unwrap();
        g.add_triple(TripleRecord::new("n3", "n4", "causes", 1.0)).unwrap();
        g.add_triple(TripleRecord::new("n4", "n5", "causes", 1.0)).unwrap();
        for (id, v) in vecs {
            g.nodes.get_mut(&NodeId::from_label(id).unwrap()).unwrap().embedding =
                Some(Embedding::new(v.to_vec()).unwrap());
        }
        let q = Embedding::new(vec![0.9, 0.3, 0.3, 0.0]).unwrap();
        let mut oracle: Vec<(f64, &str)> = vecs
            .iter()
            .map(|(id, v)| {
                let dot: f64 = v.iter().zip(q.values()).map(|(a, b)| a * b).sum();
                (dot / q.norm(), *id)
            })
            .filter(|(c, _)| *c >= 0.5)
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let want: Vec<NodeId> = oracle.iter().map(|(_, id)| NodeId::from_label(id).unwrap()).collect();
        assert_eq!(g.align_query(Some(&q), &[], 0.5, 5), want);
        assert!(want.len() >= 2);
    }

    #[test]
    fn entails_respects_direction() {
        let g = chain();
        assert!(g.entails("A", "C", 2));
        assert!(!g.entails("A", "C", 1));
        assert!(!g.entails("C", "A", 3));
        assert!(!g.entails("unknown", "C", 3));
    }

    #[test]
    fn entails_with_phrase_spans() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("poor housing", "mold exposure", "causes", 1.0))
            .unwrap();
        assert!(g.entails("poor housing often", "mold exposure", 1));
    }

    #[test]
    fn json_round_trip_and_dimension() {
        let enc = crate::embedding::HashingEncoder::default();
        let mut g = chain();
        g.embed_nodes(&enc).unwrap();
        let mut buf = Vec::new();
        g.write_json(&mut buf).unwrap();
        let back = CausalGraph::read_json(buf.as_slice()).unwrap();
        assert_eq!(back.edge_count(), 2);
        assert_eq!(back.node_count(), 3);
        let n = back.node(&NodeId::from_label("a").unwrap()).unwrap();
        assert_eq!(n.embedding.as_ref().unwrap().dimension(), DIMENSION);
    }

    #[test]
    fn triple_file_defaults() {
        let input = r#"{"cause": "smoking", "effect": "lung cancer", "relation": "causes", "extra": 1}
{"cause": "a", "effect": "b", "relation": "causes", "source": "s"}
"#;
        let recs = read_triples(input.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].confidence, 1.0);
        assert!(!recs[1].verified);
    }

    #[test]
    fn verified_filter() {
        let mut g = CausalGraph::new();
        let mut r = TripleRecord::new("a", "b", "causes", 1.0);
        r.verified = true;
        g.add_triple(r).unwrap();
        g.add_triple(TripleRecord::new("b", "c", "causes", 1.0)).unwrap();
        let v = g.verified_only();
        assert_eq!(v.edge_count(), 1);
        assert_eq!(v.node_count(), 2);
    }
}

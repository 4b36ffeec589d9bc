use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{CausalGraph, GraphError, NodeId};

/// A simple directed path through the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalPath {
    pub nodes: Vec<NodeId>,
    pub hops: usize,
    pub min_confidence: f64,
    /// Relation of the strongest edge used for each hop.
    pub relations: Vec<String>,
}

impl CausalPath {
    /// `A → B → C (causes)`; mixed relations are listed per hop.
    pub fn render(&self) -> String {
        let chain = self
            .nodes
            .iter()
            .map(NodeId::as_str)
            .collect::<Vec<_>>()
            .join(" → ");
        let mut rels: Vec<&str> = self.relations.iter().map(String::as_str).collect();
        let uniform = rels.windows(2).all(|w| w[0] == w[1]);
        if uniform {
            rels.truncate(1);
        }
        format!("{chain} ({})", rels.join(", "))
    }

    /// Consecutive (cause, effect) pairs.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.nodes.windows(2).map(|w| (&w[0], &w[1]))
    }

    /// Checks the path against `graph`: every hop is an edge, no node
    /// repeats and the recorded summary fields agree.
    pub fn validate(&self, graph: &CausalGraph) -> bool {
        if self.nodes.len() < 2 || self.hops != self.nodes.len() - 1 {
            return false;
        }
        let distinct: BTreeSet<&NodeId> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return false;
        }
        let mut min_conf = f64::INFINITY;
        for (c, e) in self.edges() {
            match graph.best_edge(c, e) {
                Some(t) => min_conf = min_conf.min(t.confidence),
                None => return false,
            }
        }
        min_conf == self.min_confidence
    }
}

/// Traversal knobs beyond hop and path limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalOptions {
    /// One-hop edges pointing into each seed.
    pub reverse_exposure: bool,
    /// For each direct cause of a seed, its other one-hop effects.
    pub common_causes: bool,
}

impl Default for TraversalOptions {
    fn default() -> Self {
        Self {
            reverse_exposure: true,
            common_causes: false,
        }
    }
}

/// (hops asc, min_confidence desc, node sequence asc)
pub(crate) fn path_order(a: &CausalPath, b: &CausalPath) -> Ordering {
    a.hops
        .cmp(&b.hops)
        .then_with(|| b.min_confidence.total_cmp(&a.min_confidence))
        .then_with(|| a.nodes.cmp(&b.nodes))
}

impl CausalGraph {
    pub fn traverse(
        &self,
        seeds: &[NodeId],
        max_hops: usize,
        max_paths: usize,
    ) -> Result<Vec<CausalPath>, GraphError> {
        self.traverse_with(seeds, max_hops, max_paths, TraversalOptions::default())
    }

    /// Forward simple paths of 1..=max_hops hops from every seed, plus the
    /// exposures selected in `options`; deduplicated, sorted, truncated.
    pub fn traverse_with(
        &self,
        seeds: &[NodeId],
        max_hops: usize,
        max_paths: usize,
        options: TraversalOptions,
    ) -> Result<Vec<CausalPath>, GraphError> {
        for s in seeds {
            if !self.contains(s) {
                return Err(GraphError::UnknownSeed(s.as_str().to_string()));
            }
        }
        let mut found: BTreeSet<Vec<NodeId>> = BTreeSet::new();
        for seed in seeds {
            self.forward_paths(seed, max_hops, &mut found);
            if options.reverse_exposure {
                for pred in self.predecessors(seed) {
                    found.insert(vec![pred.clone(), seed.clone()]);
                }
            }
            if options.common_causes {
                for pred in self.predecessors(seed) {
                    for sibling in self.successors(pred) {
                        if sibling != seed {
                            found.insert(vec![pred.clone(), sibling.clone()]);
                        }
                    }
                }
            }
        }
        let mut paths: Vec<CausalPath> = found
            .into_iter()
            .map(|nodes| self.summarize(nodes))
            .collect();
        paths.sort_by(path_order);
        paths.truncate(max_paths);
        Ok(paths)
    }

    fn forward_paths(&self, seed: &NodeId, max_hops: usize, out: &mut BTreeSet<Vec<NodeId>>) {
        let mut queue: VecDeque<Vec<NodeId>> = VecDeque::from([vec![seed.clone()]]);
        while let Some(path) = queue.pop_front() {
            if path.len() > max_hops {
                continue;
            }
            let tail = path.last().expect("paths are never empty");
            for next in self.successors(tail) {
                if path.contains(next) {
                    continue;
                }
                let mut extended = path.clone();
                extended.push(next.clone());
                out.insert(extended.clone());
                queue.push_back(extended);
            }
        }
    }

    fn summarize(&self, nodes: Vec<NodeId>) -> CausalPath {
        let mut min_confidence = f64::INFINITY;
        let mut relations = Vec::with_capacity(nodes.len().saturating_sub(1));
        for w in nodes.windows(2) {
            let edge = self
                .best_edge(&w[0], &w[1])
                .expect("traversal only follows existing edges");
            min_confidence = min_confidence.min(edge.confidence);
            relations.push(edge.relation.clone());
        }
        CausalPath {
            hops: nodes.len() - 1,
            nodes,
            min_confidence,
            relations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TripleRecord;

    fn id(s: &str) -> NodeId {
        NodeId::from_label(s).unwrap()
    }

    fn chain() -> CausalGraph {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("A", "B", "causes", 0.9)).unwrap();
        g.add_triple(TripleRecord::new("B", "C", "causes", 0.8)).unwrap();
        g
    }

    fn seqs(paths: &[CausalPath]) -> Vec<Vec<&str>> {
        paths
            .iter()
            .map(|p| p.nodes.iter().map(NodeId::as_str).collect())
            .collect()
    }

    #[test]
    fn chain_from_head() {
        let g = chain();
        let p = g.traverse(&[id("a")], 2, 20).unwrap();
        assert_eq!(seqs(&p), vec![vec!["a", "b"], vec!["a", "b", "c"]]);
        assert_eq!(p[1].min_confidence, 0.8);
        assert_eq!(p[1].render(), "a → b → c (causes)");
    }

    #[test]
    fn middle_seed_gets_reverse_exposure() {
        let g = chain();
        let p = g.traverse(&[id("b")], 1, 20).unwrap();
        // same hop count: higher min confidence first
        assert_eq!(seqs(&p), vec![vec!["a", "b"], vec!["b", "c"]]);
    }

    #[test]
    fn sink_seed() {
        let g = chain();
        let p = g.traverse(&[id("c")], 3, 20).unwrap();
        assert_eq!(seqs(&p), vec![vec!["b", "c"]]);
    }

    #[test]
    fn unknown_seed() {
        assert!(matches!(
            chain().traverse(&[id("zzz")], 2, 20),
            Err(GraphError::UnknownSeed(_))
        ));
    }

    #[test]
    fn cycles_terminate_with_simple_paths() {
        let mut g = chain();
        g.add_triple(TripleRecord::new("C", "A", "causes", 0.7)).unwrap();
        let p = g.traverse(&[id("a")], 10, 100).unwrap();
        for path in &p {
            assert!(path.validate(&g));
        }
        assert_eq!(
            seqs(&p),
            vec![vec!["a", "b"], vec!["c", "a"], vec!["a", "b", "c"]]
        );
    }

    #[test]
    fn truncation_and_dedup() {
        let g = chain();
        let p = g.traverse(&[id("a"), id("b")], 2, 2).unwrap();
        assert_eq!(seqs(&p), vec![vec!["a", "b"], vec!["b", "c"]]);
    }

    #[test]
    fn common_cause_option() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("smoking", "yellow teeth", "causes", 0.9)).unwrap();
        g.add_triple(TripleRecord::new("smoking", "lung cancer", "causes", 0.9)).unwrap();
        let opts = TraversalOptions { reverse_exposure: true, common_causes: true };
        let p = g.traverse_with(&[id("yellow teeth")], 1, 10, opts).unwrap();
        assert_eq!(
            seqs(&p),
            vec![vec!["smoking", "lung cancer"], vec!["smoking", "yellow teeth"]]
        );
        let p = g.traverse(&[id("yellow teeth")], 1, 10).unwrap();
        assert_eq!(seqs(&p), vec![vec!["smoking", "yellow teeth"]]);
    }

    #[test]
    fn mixed_relations_render_per_hop() {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("a", "b", "causes", 1.0)).unwrap();
        g.add_triple(TripleRecord::new("b", "c", "worsens", 1.0)).unwrap();
        let p = g.traverse(&[id("a")], 2, 5).unwrap();
        assert_eq!(p[1].render(), "a → b → c (causes, worsens)");
    }
}

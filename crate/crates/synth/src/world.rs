//! Seeded synthetic causal world.
//!
//! Every entity is a unique made-up word, so lexical matching never links
//! two chains and nothing leaks in from real-world knowledge. Each chain
//! `a -> b -> c -> d` yields three triples, one evidence passage per edge,
//! a handful of distractor passages and one gold question.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use causeway_core::embedding::PassageRecord;
use causeway_core::eval::GoldRecord;
use causeway_core::graph::TripleRecord;
use causeway_core::text::is_stopword;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const ONSETS: &[&str] = &[
    "b", "br", "d", "dr", "f", "g", "gl", "k", "kr", "l", "m", "n", "p", "pl", "r", "s", "st", "t",
    "tr", "v", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "x", "m"];
const SUFFIXES: &[&str] = &["ium", "ine", "ase", "ol", "ite", "on", ""];

const EDGE_TEMPLATES: &[&str] = &[
    "Field observations indicate that {c} causes {e} in most monitored sites.",
    "Laboratory work confirms {c} causes {e} under controlled exposure.",
    "Long-term records suggest {c} causes {e} over several seasons.",
];

const DISTRACTOR_TEMPLATES: &[&str] = &[
    "{X} was catalogued during the regional survey.",
    "Researchers measured {x} concentrations at twelve stations.",
    "Reports on {x} appeared in several bulletins last year.",
    "{X} remains a topic of ongoing monitoring.",
    "Samples containing {x} were archived for later study.",
    "A committee reviewed funding for {x} research.",
    "Older maps list {x} under a different name.",
];

/// Which chain member each distractor mentions.
const DISTRACTOR_TARGETS: [usize; 7] = [0, 0, 1, 2, 3, 3, 1];

const QUERY_TEMPLATES: &[&str] = &[
    "How does {a} ultimately affect {d}?",
    "Why does {a} eventually lead to {d}?",
    "What is the causal chain from {a} to {d}?",
    "Through what mechanism does {a} influence {d}?",
];

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(f) => f.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Draws pronounceable words of five or more letters.
pub struct WordGen {
    rng: ChaCha8Rng,
}

impl WordGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[self.rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[self.rng.random_range(0..VOWELS.len())]);
                w.push_str(CODAS[self.rng.random_range(0..CODAS.len())]);
            }
            w.push_str(SUFFIXES[self.rng.random_range(0..SUFFIXES.len())]);
            if w.len() >= 5 && !is_stopword(&w) {
                return w;
            }
        }
    }

    /// A word not contained in `taken`; the result is added to it.
    pub fn fresh(&mut self, taken: &mut BTreeSet<String>) -> String {
        loop {
            let w = self.word();
            if taken.insert(w.clone()) {
                return w;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub chains: Vec<[String; 4]>,
    pub triples: Vec<TripleRecord>,
    pub passages: Vec<PassageRecord>,
    pub gold: Vec<GoldRecord>,
}

impl World {
    pub fn generate(seed: u64, chains: usize) -> Self {
        let mut words = WordGen::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut taken = BTreeSet::new();
        let chains: Vec<[String; 4]> = (0..chains)
            .map(|_| std::array::from_fn(|_| words.fresh(&mut taken)))
            .collect();

        let mut triples = Vec::new();
        let mut texts = Vec::new();
        let mut gold = Vec::new();
        for (ci, chain) in chains.iter().enumerate() {
            for (hop, pair) in chain.windows(2).enumerate() {
                let mut t = TripleRecord::new(&pair[0], &pair[1], "causes", rng.random_range(80..=100) as f64 / 100.0);
                t.source = format!("chain{ci:02}");
                triples.push(t);
                let template = EDGE_TEMPLATES[(ci + hop) % EDGE_TEMPLATES.len()];
                texts.push((fill(template, &[("c", &pair[0]), ("e", &pair[1])]), format!("chain{ci:02}")));
            }
            for (j, &target) in DISTRACTOR_TARGETS.iter().enumerate() {
                let x = &chain[target];
                let template = DISTRACTOR_TEMPLATES[(ci + j) % DISTRACTOR_TEMPLATES.len()];
                texts.push((fill(template, &[("x", x), ("X", &capitalize(x))]), format!("chain{ci:02}")));
            }
            let [a, b, c, d] = chain;
            gold.push(GoldRecord {
                id: Some(format!("q{:03}", ci + 1)),
                query: fill(QUERY_TEMPLATES[ci % QUERY_TEMPLATES.len()], &[("a", a), ("d", d)]),
                answer: format!("{} causes {b}. {} causes {c}. {} causes {d}.", capitalize(a), capitalize(b), capitalize(c)),
                gold_edges: vec![(a.clone(), b.clone()), (b.clone(), c.clone()), (c.clone(), d.clone())],
                choices: None,
                relevant_passage_ids: None,
            });
        }
        texts.shuffle(&mut rng);
        let passages = texts
            .into_iter()
            .enumerate()
            .map(|(i, (text, source))| PassageRecord {
                id: format!("p{:04}", i + 1),
                text,
                source,
            })
            .collect();
        Self {
            chains,
            triples,
            passages,
            gold,
        }
    }

    /// Every entity label in the world.
    pub fn lexicon(&self) -> BTreeSet<String> {
        self.chains.iter().flatten().cloned().collect()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("triples.jsonl"), &self.triples)?;
        write_jsonl(&dir.join("sample_triples.jsonl"), &self.triples[..3.min(self.triples.len())])?;
        write_jsonl(&dir.join("passages.jsonl"), &self.passages)?;
        write_jsonl(&dir.join("gold.jsonl"), &self.gold)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_words_unique() {
        let a = World::generate(7, 20);
        let b = World::generate(7, 20);
        let texts = |w: &World| w.passages.iter().map(|p| p.text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&a), texts(&b));
        assert_eq!(a.lexicon().len(), 80);
        assert_eq!(a.triples.len(), 60);
        assert_eq!(a.passages.len(), 200);
        assert_eq!(a.gold.len(), 20);
    }

    #[test]
    fn every_edge_has_an_evidence_passage() {
        let w = World::generate(3, 5);
        for t in &w.triples {
            let needle = format!("{} causes {}", t.cause, t.effect);
            assert!(w.passages.iter().any(|p| p.text.contains(&needle)), "{needle}");
        }
    }
}

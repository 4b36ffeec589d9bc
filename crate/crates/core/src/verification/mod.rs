//! Answer generation and the two post-hoc checks: causal consistency
//! against the graph and support of each claim by the retrieved knowledge.

mod claims;
mod generate;

pub use claims::{extract_claims, parse_claim, Claim, ClaimExtractor, LexicalExtractor};
pub use generate::{generate, GenerationError, GenerationMode, GENERATION_MAX_TOKENS};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedding, Encoder};
use crate::graph::{verify_pair, CausalGraph, VerificationContext};
use crate::llm::{LlmClient, LlmError};
use crate::retrieval::KnowledgeSet;
use crate::text::{contains_phrase, normalize_label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Fallback,
    Rewrite,
}

/// Fallback iff `s_causal < tau`.
pub fn causal_decision(s_causal: f64, tau: f64) -> Decision {
    if s_causal < tau {
        Decision::Fallback
    } else {
        Decision::Accept
    }
}

/// Rewrite iff `s_hallucination > delta`.
pub fn hallucination_decision(s_hallucination: f64, delta: f64) -> Decision {
    if s_hallucination > delta {
        Decision::Rewrite
    } else {
        Decision::Accept
    }
}

/// Rewrite first, then fallback.
pub fn combine(causal: Decision, hallucination: Decision) -> Decision {
    if hallucination == Decision::Rewrite {
        Decision::Rewrite
    } else if causal == Decision::Fallback {
        Decision::Fallback
    } else {
        Decision::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau: f64,
    pub delta: f64,
    pub theta_support: f64,
    pub max_hops: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau: 0.6,
            delta: 0.3,
            theta_support: 0.7,
            max_hops: 3,
        }
    }
}

/// Decides whether the graph supports `cause -> effect`.
pub trait EntailmentJudge {
    fn entailed(&self, graph: &CausalGraph, cause: &str, effect: &str, max_hops: usize) -> Result<bool, LlmError>;
}

/// Directed reachability in the graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphJudge;

impl EntailmentJudge for GraphJudge {
    fn entailed(&self, graph: &CausalGraph, cause: &str, effect: &str, max_hops: usize) -> Result<bool, LlmError> {
        Ok(graph.entails(cause, effect, max_hops))
    }
}

/// Asks the LLM verifier about pairs the graph cannot settle.
pub struct LlmJudge<'a> {
    pub client: &'a dyn LlmClient,
    pub context: VerificationContext,
}

impl EntailmentJudge for LlmJudge<'_> {
    fn entailed(&self, graph: &CausalGraph, cause: &str, effect: &str, max_hops: usize) -> Result<bool, LlmError> {
        if graph.entails(cause, effect, max_hops) {
            return Ok(true);
        }
        let v = verify_pair(self.client, &self.context, cause, effect)?;
        Ok(v.correct && !v.reoriented)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub cause: String,
    pub effect: String,
    pub entailed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimSupport {
    pub claim: Claim,
    pub supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalCheck {
    pub s_causal: f64,
    pub per_relation: Vec<RelationCheck>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationCheck {
    pub s_hallucination: f64,
    pub per_claim: Vec<ClaimSupport>,
    pub decision: Decision,
}

pub fn causal_check_with(
    judge: &dyn EntailmentJudge,
    graph: &CausalGraph,
    claims: &[Claim],
    tau: f64,
    max_hops: usize,
) -> Result<CausalCheck, LlmError> {
    let mut per_relation = Vec::new();
    for c in claims.iter().filter(|c| c.is_causal) {
        let (Some(cause), Some(effect)) = (&c.cause_span, &c.effect_span) else {
            continue;
        };
        per_relation.push(RelationCheck {
            cause: cause.clone(),
            effect: effect.clone(),
            entailed: judge.entailed(graph, cause, effect, max_hops)?,
        });
    }
    let s_causal = if per_relation.is_empty() {
        1.0
    } else {
        per_relation.iter().filter(|r| r.entailed).count() as f64 / per_relation.len() as f64
    };
    Ok(CausalCheck {
        s_causal,
        decision: causal_decision(s_causal, tau),
        per_relation,
    })
}

/// Share of the answer's causal claims the graph entails (1.0 with none).
pub fn causal_check(graph: &CausalGraph, claims: &[Claim], tau: f64, max_hops: usize) -> CausalCheck {
    causal_check_with(&GraphJudge, graph, claims, tau, max_hops).expect("graph judge is infallible")
}

/// One minus the share of claims found in the knowledge, either verbatim
/// (normalized substring) or by embedding cosine >= `theta_support`.
pub fn hallucination_check(
    knowledge: &KnowledgeSet,
    claims: &[Claim],
    encoder: &dyn Encoder,
    theta_support: f64,
    delta: f64,
) -> HallucinationCheck {
    let texts: Vec<String> = knowledge.items.iter().map(|i| normalize_label(&i.rendered_text)).collect();
    let mut item_embeddings: Option<Vec<Option<Embedding>>> = None;
    let mut per_claim = Vec::with_capacity(claims.len());
    for claim in claims {
        let norm = normalize_label(&claim.text);
        let verbatim = !norm.is_empty() && texts.iter().any(|t| t.contains(&norm));
        let supported = verbatim || {
            let items = item_embeddings.get_or_insert_with(|| {
                knowledge.items.iter().map(|i| encoder.embed(&i.rendered_text).ok()).collect()
            });
            match encoder.embed(&claim.text) {
                Ok(ce) => items
                    .iter()
                    .flatten()
                    .any(|ie| cosine(&ce, ie).is_ok_and(|s| s >= theta_support)),
                Err(_) => false,
            }
        };
        per_claim.push(ClaimSupport {
            claim: claim.clone(),
            supported,
        });
    }
    let s_hallucination = if per_claim.is_empty() {
        0.0
    } else {
        1.0 - per_claim.iter().filter(|c| c.supported).count() as f64 / per_claim.len() as f64
    };
    HallucinationCheck {
        s_hallucination,
        decision: hallucination_decision(s_hallucination, delta),
        per_claim,
    }
}

/// Share of distinct graph relations in the knowledge that the answer
/// restates as a causal claim (1.0 when the knowledge holds none).
pub fn retrieved_coverage(knowledge: &KnowledgeSet, claims: &[Claim]) -> f64 {
    let relations: BTreeSet<(String, String)> = knowledge
        .paths()
        .flat_map(|p| p.edges().map(|(c, e)| (c.as_str().to_string(), e.as_str().to_string())))
        .collect();
    if relations.is_empty() {
        return 1.0;
    }
    let mentioned = relations
        .iter()
        .filter(|(c, e)| {
            claims.iter().any(|cl| match (&cl.cause_span, &cl.effect_span) {
                (Some(cs), Some(es)) => contains_phrase(cs, c) && contains_phrase(es, e),
                _ => false,
            })
        })
        .count();
    mentioned as f64 / relations.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub s_causal: f64,
    pub s_hallucination: f64,
    pub retrieved_coverage: f64,
    pub per_relation: Vec<RelationCheck>,
    pub per_claim: Vec<ClaimSupport>,
    pub decision: Decision,
}

impl VerificationReport {
    pub fn causal_decision(&self, tau: f64) -> Decision {
        causal_decision(self.s_causal, tau)
    }
}

/// Extracts claims from `answer` and runs both checks.
pub fn verify_answer(
    answer: &str,
    knowledge: &KnowledgeSet,
    graph: &CausalGraph,
    encoder: &dyn Encoder,
    extractor: &dyn ClaimExtractor,
    judge: &dyn EntailmentJudge,
    thresholds: &Thresholds,
) -> Result<VerificationReport, LlmError> {
    let claims = extractor.extract(answer);
    let causal = causal_check_with(judge, graph, &claims, thresholds.tau, thresholds.max_hops)?;
    let hall = hallucination_check(knowledge, &claims, encoder, thresholds.theta_support, thresholds.delta);
    Ok(VerificationReport {
        s_causal: causal.s_causal,
        s_hallucination: hall.s_hallucination,
        retrieved_coverage: retrieved_coverage(knowledge, &claims),
        decision: combine(causal.decision, hall.decision),
        per_relation: causal.per_relation,
        per_claim: hall.per_claim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{HashingEncoder, Passage, DIMENSION};
    use crate::graph::TripleRecord;
    use crate::retrieval::KnowledgeItem;
    use proptest::prelude::*;

    fn abc() -> CausalGraph {
        let mut g = CausalGraph::new();
        g.add_triple(TripleRecord::new("a", "b", "causes", 1.0)).unwrap();
        g.add_triple(TripleRecord::new("b", "c", "causes", 1.0)).unwrap();
        g
    }

    fn knowledge(texts: &[&str]) -> KnowledgeSet {
        KnowledgeSet {
            query: "q".into(),
            seeds: vec![],
            items: texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    KnowledgeItem::semantic(
                        Passage {
                            id: format!("p{i}"),
                            text: t.to_string(),
                            source: String::new(),
                            embedding: Embedding::zeros(0),
                        },
                        0.5,
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn causal_score_fraction() {
        let g = abc();
        let claims = extract_claims("A causes B. B causes C. A causes C. C causes A.");
        let r = causal_check(&g, &claims, 0.6, 3);
        assert_eq!(r.s_causal, 0.75);
        assert_eq!(r.decision, Decision::Accept);
        assert!(!r.per_relation[3].entailed, "reversed direction must not be entailed");
    }

    #[test]
    fn no_causal_claims_is_vacuously_consistent() {
        let r = causal_check(&abc(), &extract_claims("Nothing here. Still nothing."), 0.6, 3);
        assert_eq!(r.s_causal, 1.0);
        assert_eq!(r.decision, Decision::Accept);
    }

    #[test]
    fn hallucination_fraction() {
        let enc = HashingEncoder::new(DIMENSION);
        let k = knowledge(&["Alpha grows. Beta shrinks. Gamma waits. Delta sings.", "Epsilon stays."]);
        let claims = extract_claims("Alpha grows. Beta shrinks. Gamma waits. Epsilon stays. Zeta dances wildly.");
        let r = hallucination_check(&k, &claims, &enc, 0.7, 0.3);
        assert!((r.s_hallucination - 0.2).abs() < 1e-12);
        assert_eq!(r.decision, Decision::Accept);
        let none = hallucination_check(&k, &[], &enc, 0.7, 0.3);
        assert_eq!(none.s_hallucination, 0.0);
    }

    #[test]
    fn unreachable_threshold() {
        let enc = HashingEncoder::new(DIMENSION);
        let k = knowledge(&["smoking causes cancer in many people"]);
        let claims = extract_claims("Smoking causes cancer among adults.");
        let r = hallucination_check(&k, &claims, &enc, 1.01, 0.3);
        assert_eq!(r.s_hallucination, 1.0);
        assert_eq!(r.decision, Decision::Rewrite);
    }

    #[test]
    fn combined_priority() {
        assert_eq!(combine(Decision::Fallback, Decision::Rewrite), Decision::Rewrite);
        assert_eq!(combine(Decision::Fallback, Decision::Accept), Decision::Fallback);
        assert_eq!(combine(Decision::Accept, Decision::Accept), Decision::Accept);
    }

    #[test]
    fn coverage_counts_restated_edges() {
        let g = abc();
        let path = g.traverse(&[crate::graph::NodeId::from_label("a").unwrap()], 3, 10).unwrap();
        let ks = KnowledgeSet {
            query: "a".into(),
            seeds: vec![],
            items: path.into_iter().map(KnowledgeItem::causal).collect(),
        };
        assert_eq!(retrieved_coverage(&ks, &extract_claims("A causes B.")), 0.5);
        assert_eq!(retrieved_coverage(&KnowledgeSet::default(), &[]), 1.0);
    }

    proptest! {
        #[test]
        fn verbatim_support_ignores_theta(n in 1usize..6, theta in 0.0..1.5f64) {
            let enc = HashingEncoder::new(DIMENSION);
            let sentences: Vec<String> = (0..n).map(|i| format!("Item {i} is verbatim.")).collect();
            let k = knowledge(&[sentences.join(" ").as_str()]);
            let claims = extract_claims(&sentences.join(" "));
            prop_assert_eq!(hallucination_check(&k, &claims, &enc, theta, 0.3).s_hallucination, 0.0);
        }

        #[test]
        fn thresholds_are_monotone(s in 0.0..=1.0f64, t1 in 0.0..=1.0f64, t2 in 0.0..=1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if causal_decision(s, lo) == Decision::Fallback {
                prop_assert_eq!(causal_decision(s, hi), Decision::Fallback);
            }
            if hallucination_decision(s, hi) == Decision::Rewrite {
                prop_assert_eq!(hallucination_decision(s, lo), Decision::Rewrite);
            }
        }
    }
}

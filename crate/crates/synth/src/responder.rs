//! A deterministic stand-in for a language model over the synthetic world.
//!
//! The reply is a pure function of the request. Refinement prompts rewrite
//! the question around the entities it names. Generation prompts read the
//! relations out of the knowledge block. For a fixed share of questions,
//! normal generation is deliberately flawed: some drafts append invented
//! facts, others state chain links backwards. This gives the verification
//! stages something to catch.

use std::collections::BTreeSet;
use std::sync::Arc;

use causeway_core::llm::{
    CompletionRequest, LlmClient, LlmError, PromptLibrary, ABSTENTION, CAUSAL_VERIFICATION, DECOMPOSE,
    EXPAND, GENERATE_NORMAL, GENERATE_REWRITE, GENERATE_STRICT, SIMPLIFY,
};
use causeway_core::text::{normalize_label, split_sentences, tokenize};

use crate::world::{capitalize, WordGen};

/// What a normal-mode draft gets wrong for a given question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flaw {
    None,
    /// Two invented sentences about unknown entities.
    Fabricate,
    /// The first two links are stated backwards.
    Reverse,
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn flaw_for(query: &str) -> Flaw {
    match fnv1a(&normalize_label(query)) % 5 {
        0 | 1 => Flaw::Fabricate,
        2 => Flaw::Reverse,
        _ => Flaw::None,
    }
}

pub struct SimulatedResponder {
    prompts: Arc<PromptLibrary>,
    lexicon: BTreeSet<String>,
}

impl SimulatedResponder {
    pub fn new(prompts: Arc<PromptLibrary>, lexicon: BTreeSet<String>) -> Self {
        Self { prompts, lexicon }
    }

    fn entities(&self, text: &str) -> Vec<String> {
        let mut seen = Vec::new();
        for tok in tokenize(text) {
            if self.lexicon.contains(&tok) && !seen.contains(&tok) {
                seen.push(tok);
            }
        }
        seen
    }

    fn refine(&self, action: &str, query: &str) -> String {
        let ents = self.entities(query);
        let (a, d) = match ents.as_slice() {
            [a, .., d] => (a.as_str(), d.as_str()),
            [a] => (a.as_str(), a.as_str()),
            [] => {
                return match action {
                    DECOMPOSE => format!("{query}\nWhat causes this?"),
                    _ => query.to_string(),
                }
            }
        };
        match action {
            SIMPLIFY => format!("How does {a} affect {d}?"),
            EXPAND => format!("How does {a} ultimately affect {d}, and which intermediate causes link {a} to {d}?"),
            _ => format!("What does {a} cause?\nWhat causes {d}?\nHow is {a} connected to {d}?"),
        }
    }

    /// (cause, effect) pairs stated in the knowledge block. The longest
    /// rendered path wins when there is one; otherwise every "x causes y"
    /// found in the passages, in order.
    fn relations(&self, knowledge: &str) -> Vec<(String, String)> {
        let lines: Vec<&str> = knowledge.lines().filter_map(|l| l.strip_prefix("- ")).collect();
        let longest = lines
            .iter()
            .filter(|l| l.contains(" → "))
            .map(|l| {
                let chain = l.rsplit_once(" (").map_or(*l, |(c, _)| c);
                chain.split(" → ").map(str::to_string).collect::<Vec<_>>()
            })
            .fold(Vec::new(), |best, p| if p.len() > best.len() { p } else { best });
        if longest.len() >= 2 {
            return longest.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        }
        let mut pairs = Vec::new();
        for line in lines {
            let toks = tokenize(line);
            for w in toks.windows(3) {
                if w[1] == "causes" && self.lexicon.contains(&w[0]) && self.lexicon.contains(&w[2]) {
                    let pair = (w[0].clone(), w[2].clone());
                    if !pairs.contains(&pair) {
                        pairs.push(pair);
                    }
                }
            }
        }
        pairs
    }

    fn fabrications(&self, query: &str) -> String {
        let mut taken = self.lexicon.clone();
        let mut words = WordGen::new(fnv1a(query));
        let (x, y) = (words.fresh(&mut taken), words.fresh(&mut taken));
        format!(
            "{} levels also rose sharply across the northern basin. Early surveys recorded {y} near every station.",
            capitalize(&x)
        )
    }

    fn answer(pairs: &[(String, String)]) -> String {
        pairs
            .iter()
            .map(|(c, e)| format!("{} causes {e}.", capitalize(c)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn generate(&self, template: &str, req: &CompletionRequest) -> String {
        let query = req.get("query").unwrap_or_default();
        let knowledge = req.get("knowledge").unwrap_or_default();
        let mut pairs = self.relations(knowledge);
        match template {
            GENERATE_STRICT => {
                if pairs.is_empty() {
                    ABSTENTION.to_string()
                } else {
                    Self::answer(&pairs)
                }
            }
            GENERATE_REWRITE => {
                let unsupported: BTreeSet<String> = req
                    .get("unsupported_claims")
                    .unwrap_or_default()
                    .lines()
                    .map(|l| normalize_label(l.trim_start_matches("- ")))
                    .collect();
                let kept: Vec<String> = split_sentences(req.get("draft").unwrap_or_default())
                    .into_iter()
                    .filter(|s| !unsupported.contains(&normalize_label(s)))
                    .collect();
                match (kept.is_empty(), pairs.is_empty()) {
                    (false, _) => kept.join(" "),
                    (true, false) => Self::answer(&pairs),
                    (true, true) => ABSTENTION.to_string(),
                }
            }
            _ => {
                if pairs.is_empty() {
                    return "The evidence does not describe how these factors are related.".into();
                }
                match flaw_for(query) {
                    Flaw::None => Self::answer(&pairs),
                    Flaw::Fabricate => format!("{} {}", Self::answer(&pairs), self.fabrications(query)),
                    Flaw::Reverse => {
                        for p in pairs.iter_mut().take(2) {
                            std::mem::swap(&mut p.0, &mut p.1);
                        }
                        Self::answer(&pairs)
                    }
                }
            }
        }
    }
}

impl LlmClient for SimulatedResponder {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.prompts.render(request)?;
        let name = request.template_name.as_str();
        let base = name.strip_suffix("_condensed").unwrap_or(name);
        Ok(match base {
            SIMPLIFY | EXPAND | DECOMPOSE => self.refine(base, request.get("query").unwrap_or_default()),
            GENERATE_NORMAL | GENERATE_STRICT | GENERATE_REWRITE => self.generate(base, request),
            CAUSAL_VERIFICATION => {
                let cause = request.get("cause").unwrap_or_default();
                let effect = request.get("effect").unwrap_or_default();
                format!(
                    "Correctness: True\nRefined Causal Statement: \"{cause}\" causes \"{effect}\"\n\
                     Confidence: High\nExplanation: The field records report this link directly."
                )
            }
            other => return Err(LlmError::UnknownTemplate(other.to_string())),
        })
    }
}

use serde::{Deserialize, Serialize};

use crate::text::{normalize_label, split_sentences};

/// One sentence of an answer, with cause/effect spans when it asserts a
/// causal relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub cause_span: Option<String>,
    pub effect_span: Option<String>,
    pub is_causal: bool,
}

impl Claim {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            cause_span: None,
            effect_span: None,
            is_causal: false,
        }
    }

    pub fn causal(text: impl Into<String>, cause: impl Into<String>, effect: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            cause_span: Some(cause.into()),
            effect_span: Some(effect.into()),
            is_causal: true,
        }
    }
}

pub trait ClaimExtractor: Send + Sync {
    fn extract(&self, answer: &str) -> Vec<Claim>;
}

/// Connective phrase and whether its subject is the effect.
const CONNECTIVES: &[(&str, bool)] = &[
    ("increases the risk of", false),
    ("contributes to", false),
    ("caused by", true),
    ("results in", false),
    ("leads to", false),
    ("due to", true),
    ("because", true),
    ("causes", false),
    ("cause", false),
];

const AUXILIARIES: &[&str] = &["is", "are", "was", "were", "be", "been", "being", "mainly", "largely", "often"];

/// Sentence splitter plus the fixed connective patterns.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalExtractor;

fn clean_span(s: &str) -> String {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | ':' | '"' | '\'' | '(' | ')'))
        .to_string()
}

fn strip_trailing_aux(span: &str) -> String {
    let mut words: Vec<&str> = span.split_whitespace().collect();
    while words.last().is_some_and(|w| AUXILIARIES.contains(w)) {
        words.pop();
    }
    words.join(" ")
}

/// Leftmost connective occurrence on word boundaries; longer phrases win
/// ties at the same position.
fn find_connective(sentence: &str) -> Option<(usize, &'static str, bool)> {
    let padded = format!(" {sentence} ");
    let mut best: Option<(usize, &'static str, bool)> = None;
    for &(phrase, passive) in CONNECTIVES {
        let needle = format!(" {phrase} ");
        if let Some(pos) = padded.find(&needle) {
            let better = match best {
                None => true,
                Some((p, b, _)) => pos < p || (pos == p && phrase.len() > b.len()),
            };
            if better {
                best = Some((pos, phrase, passive));
            }
        }
    }
    best
}

pub fn parse_claim(sentence: &str) -> Claim {
    let norm = normalize_label(sentence);
    let Some((pos, phrase, passive)) = find_connective(&norm) else {
        return Claim::plain(sentence);
    };
    // `pos` indexes the space-padded copy, so it is where the phrase starts in `norm`
    let left = &norm[..pos.min(norm.len())];
    let right = &norm[(pos + phrase.len()).min(norm.len())..];
    let (left, right) = (clean_span(left), clean_span(right));
    let (cause, effect) = if passive {
        (right, strip_trailing_aux(&left))
    } else {
        (left, right)
    };
    if cause.is_empty() || effect.is_empty() {
        return Claim::plain(sentence);
    }
    Claim::causal(sentence, cause, effect)
}

impl ClaimExtractor for LexicalExtractor {
    fn extract(&self, answer: &str) -> Vec<Claim> {
        split_sentences(answer).iter().map(|s| parse_claim(s)).collect()
    }
}

pub fn extract_claims(answer: &str) -> Vec<Claim> {
    LexicalExtractor.extract(answer)
}

//! Text normalization shared by graph labels, claim spans and the hashing
//! encoder.

use unicode_normalization::UnicodeNormalization;

/// Words ignored when turning a query into alignment terms.
const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from",
    "how", "in", "into", "is", "it", "of", "on", "or", "over", "the", "their", "this", "to",
    "what", "when", "which", "who", "why", "with",
];

/// NFC, lowercase, collapse whitespace, strip terminal punctuation.
pub fn normalize_label(raw: &str) -> String {
    let nfc: String = raw.nfc().collect::<String>().to_lowercase();
    let collapsed = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', '!', '?', ',', ';', ':'])
        .trim_end()
        .to_string()
}

/// Lowercased alphanumeric tokens in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect::<String>().to_lowercase();
    nfc.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Terms used for lexical node alignment: the whole normalized query plus
/// each of its content tokens.
pub fn query_terms(query: &str) -> Vec<String> {
    let mut terms = vec![tokenize(query).join(" ")];
    for tok in tokenize(query) {
        if !is_stopword(&tok) && !terms.contains(&tok) {
            terms.push(tok);
        }
    }
    terms.retain(|t| !t.is_empty());
    terms
}

/// True when `needle` occurs in `haystack` as a run of whole words.
/// Both sides are compared on their token sequences.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let hay = tokenize(haystack);
    let pat = tokenize(needle);
    if pat.is_empty() || pat.len() > hay.len() {
        return false;
    }
    hay.windows(pat.len()).any(|w| w == pat.as_slice())
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|n| n.is_whitespace());
            if at_boundary {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("  Lung   Cancer. "), "lung cancer");
        assert_eq!(normalize_label("Smoking!?"), "smoking");
        // NFC: e + combining acute folds to the precomposed form
        assert_eq!(normalize_label("Cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn phrase_containment_respects_word_boundaries() {
        assert!(contains_phrase("does diabetes damage kidneys", "diabetes"));
        assert!(!contains_phrase("insulin resistance", "in"));
        assert!(contains_phrase("poor housing often", "poor housing"));
    }

    #[test]
    fn sentences() {
        let s = split_sentences("Smoking causes cancer. Dose was 2.5 mg! Why? tail");
        assert_eq!(s, vec!["Smoking causes cancer.", "Dose was 2.5 mg!", "Why?", "tail"]);
    }

    #[test]
    fn terms_skip_stopwords() {
        let t = query_terms("Does diabetes damage the kidneys?");
        assert_eq!(t, vec!["does diabetes damage the kidneys", "diabetes", "damage", "kidneys"]);
    }
}

//! Rule-based subject-predicate-object extraction, used only for responses
//! without annotated triplets.

use alloc::vec::Vec;

use super::{Span, SpoTriplet};
use crate::corpus::DEFAULT_FILLED_PAUSES;

pub const PRONOUNS: [&str; 12] = ["i", "you", "he", "she", "we", "they", "it", "me", "him", "her", "us", "them"];

pub const VERBS: [&str; 60] = [
    "like", "likes", "liked", "love", "loves", "loved", "enjoy", "enjoys", "enjoyed", "play", "plays", "played",
    "eat", "eats", "ate", "go", "goes", "went", "see", "sees", "saw", "have", "has", "had", "want", "wants",
    "wanted", "watch", "watches", "watched", "read", "reads", "visit", "visits", "visited", "make", "makes",
    "made", "take", "takes", "took", "buy", "buys", "bought", "cook", "cooks", "cooked", "study", "studies",
    "studied", "live", "lives", "lived", "work", "works", "worked", "need", "needs", "know", "think",
];

/// Function words ignored by the word graph and by the object rule.
pub const STOPWORDS: [&str; 72] = [
    "a", "an", "the", "and", "or", "but", "if", "of", "to", "in", "on", "at", "for", "with", "about", "from",
    "by", "as", "is", "are", "was", "were", "be", "been", "am", "do", "does", "did", "not", "no", "yes", "so",
    "very", "too", "also", "just", "that", "this", "these", "those", "there", "here", "then", "than", "what",
    "which", "who", "when", "where", "why", "how", "can", "could", "would", "should", "will", "my", "your",
    "his", "its", "our", "their", "oh", "well", "okay", "ok", "really", "some", "any", "because", "tell", "please",
];

/// Optional coarse part-of-speech tag that overrides the word lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosHint {
    Pronoun,
    Noun,
    Verb,
    Other,
}

fn classify(token: &str) -> PosHint {
    if PRONOUNS.contains(&token) {
        PosHint::Pronoun
    } else if VERBS.contains(&token) {
        PosHint::Verb
    } else if STOPWORDS.contains(&token)
        || DEFAULT_FILLED_PAUSES.contains(&token)
        || !token.chars().any(char::is_alphanumeric)
    {
        PosHint::Other
    } else {
        PosHint::Noun
    }
}

fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "?" | "!")
}

/// Scans left to right: the first pronoun or noun-like token before a verb is
/// the subject, the verb the predicate, and the first noun-like token after
/// the verb (within the sentence) the object. Scanning resumes after each
/// object.
pub fn extract_spo_naive<S: AsRef<str>>(tokens: &[S], pos_hints: Option<&[PosHint]>) -> Vec<SpoTriplet> {
    let tags: Vec<PosHint> = match pos_hints {
        Some(h) if h.len() == tokens.len() => h.to_vec(),
        _ => tokens.iter().map(|t| classify(t.as_ref())).collect(),
    };
    let nounish = |i: usize| matches!(tags[i], PosHint::Pronoun | PosHint::Noun);
    let mut out = Vec::new();
    let mut subject: Option<usize> = None;
    let mut i = 0;
    while i < tokens.len() {
        if is_sentence_end(tokens[i].as_ref()) {
            subject = None;
            i += 1;
            continue;
        }
        match (tags[i], subject) {
            (PosHint::Verb, Some(s)) => {
                let object = (i + 1..tokens.len())
                    .take_while(|&k| !is_sentence_end(tokens[k].as_ref()))
                    .find(|&k| nounish(k));
                if let Some(o) = object {
                    out.push(SpoTriplet { subject: Span::single(s), predicate: Span::single(i), object: Span::single(o) });
                    subject = None;
                    i = o + 1;
                    continue;
                }
            }
            _ if subject.is_none() && nounish(i) => subject = Some(i),
            _ => {}
        }
        i += 1;
    }
    out
}

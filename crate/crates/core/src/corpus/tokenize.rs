use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Hesitation tokens kept verbatim by the tokenizer.
pub const DEFAULT_FILLED_PAUSES: [&str; 4] = ["uh", "um", "er", "mm"];

/// Lowercasing tokenizer: whitespace-separated chunks are split into runs of
/// alphanumerics and single punctuation marks, except chunks that are
/// filled pauses, which survive whole.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    filled_pauses: Vec<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::new(DEFAULT_FILLED_PAUSES.iter().map(|s| s.to_string()).collect())
    }
}

impl Tokenizer {
    pub fn new(filled_pauses: Vec<String>) -> Self {
        Tokenizer { filled_pauses: filled_pauses.into_iter().map(|p| p.to_lowercase()).collect() }
    }

    pub fn filled_pauses(&self) -> &[String] {
        &self.filled_pauses
    }

    pub fn is_filled_pause(&self, token: &str) -> bool {
        self.filled_pauses.iter().any(|p| p == token)
    }

    pub fn tokenize(&self, raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in raw.split_whitespace() {
            let lower = chunk.to_lowercase();
            if self.is_filled_pause(&lower) {
                out.push(lower);
                continue;
            }
            let mut word = String::new();
            for ch in lower.chars() {
                if ch.is_alphanumeric() {
                    word.push(ch);
                } else {
                    if !word.is_empty() {
                        out.push(core::mem::take(&mut word));
                    }
                    out.push(ch.to_string());
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
        }
        out
    }
}

/// Tokenizes with the default filled-pause list.
pub fn tokenize(raw: &str) -> Vec<String> {
    Tokenizer::default().tokenize(raw)
}

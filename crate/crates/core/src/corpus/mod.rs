//! Conversation transcripts: types, validation, tokenization, fallback
//! annotators, the synthetic generator and dataset splits.

mod cefr;
mod links;
mod spo;
mod split;
mod synth;
mod tokenize;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

pub use cefr::CefrMap;
pub use links::{infer_links_fallback, RelationVocab, DEFAULT_RELATIONS};
pub use spo::{extract_spo_naive, PosHint, PRONOUNS, STOPWORDS, VERBS};
pub use split::split_dataset;
pub use synth::{candidate_lexical_diversity, link_density, synth_generate, SynthConfig};
pub use tokenize::{tokenize, Tokenizer, DEFAULT_FILLED_PAUSES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("record `{id}`: {reason}")]
    Validation { id: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
}

impl CorpusError {
    fn invalid(id: &str, reason: impl Into<String>) -> Self {
        CorpusError::Validation { id: String::from(id), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    Interlocutor,
    Candidate,
}

impl Speaker {
    /// Segment id used by the sequence encoder.
    pub fn segment(self) -> usize {
        match self {
            Speaker::Interlocutor => 0,
            Speaker::Candidate => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitTag {
    #[default]
    Train,
    Dev,
    Test,
}

/// Half-open token range `[start, end)` inside one response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(at: usize) -> Self {
        Span { start: at, end: at + 1 }
    }

    pub fn range(self) -> Range<usize> {
        self.start..self.end
    }

    pub fn is_empty(self) -> bool {
        self.start >= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoTriplet {
    pub subject: Span,
    pub predicate: Span,
    pub object: Span,
}

impl SpoTriplet {
    pub fn spans(&self) -> [Span; 3] {
        [self.subject, self.predicate, self.object]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscourseLink {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub index: usize,
    pub speaker: Speaker,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub spo: Option<Vec<SpoTriplet>>,
    pub out_links: Option<Vec<DiscourseLink>>,
}

impl Response {
    /// Builds a response and tokenizes its text with the default tokenizer.
    pub fn new(index: usize, speaker: Speaker, raw_text: &str) -> Self {
        Response {
            index,
            speaker,
            raw_text: String::from(raw_text),
            tokens: tokenize(raw_text),
            spo: None,
            out_links: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub responses: Vec<Response>,
    pub sst_score: u8,
    pub split_tag: SplitTag,
}

impl Conversation {
    pub fn new(id: &str, sst_score: u8, responses: Vec<Response>) -> Self {
        Conversation { id: String::from(id), responses, sst_score, split_tag: SplitTag::Train }
    }

    /// True when at least one response carries discourse-link annotations.
    pub fn has_links(&self) -> bool {
        self.responses.iter().any(|r| r.out_links.is_some())
    }

    /// Annotated links in response order.
    pub fn links(&self) -> Vec<DiscourseLink> {
        self.responses.iter().filter_map(|r| r.out_links.as_ref()).flatten().cloned().collect()
    }

    /// Annotated links, or the adjacency fallback when the record has none.
    pub fn links_or_fallback(&self) -> Vec<DiscourseLink> {
        if self.has_links() {
            self.links()
        } else {
            infer_links_fallback(self)
        }
    }

    /// Checks every structural invariant of a transcript record.
    pub fn validate(&self, relations: &RelationVocab) -> Result<(), CorpusError> {
        let id = self.id.as_str();
        if self.responses.is_empty() {
            return Err(CorpusError::invalid(id, "conversation has no responses"));
        }
        if !(1..=9).contains(&self.sst_score) {
            return Err(CorpusError::invalid(id, format!("score {} outside [1, 9]", self.sst_score)));
        }
        let n = self.responses.len();
        for (i, r) in self.responses.iter().enumerate() {
            if r.index != i {
                return Err(CorpusError::invalid(id, format!("response {} carries index {}", i, r.index)));
            }
            for (k, t) in r.spo.iter().flatten().enumerate() {
                for (role, span) in ["subject", "predicate", "object"].iter().zip(t.spans()) {
                    if span.is_empty() || span.end > r.tokens.len() {
                        return Err(CorpusError::invalid(
                            id,
                            format!(
                                "response {} triplet {}: {} span [{}, {}) invalid for {} tokens",
                                i,
                                k,
                                role,
                                span.start,
                                span.end,
                                r.tokens.len()
                            ),
                        ));
                    }
                }
            }
            for l in r.out_links.iter().flatten() {
                if l.src != i {
                    return Err(CorpusError::invalid(
                        id,
                        format!("link {}->{} stored on response {}", l.src, l.dst, i),
                    ));
                }
                if l.dst >= n {
                    return Err(CorpusError::invalid(
                        id,
                        format!("link {}->{} points past the last response ({} responses)", l.src, l.dst, n),
                    ));
                }
                if l.src == l.dst {
                    return Err(CorpusError::invalid(id, format!("self-link on response {}", i)));
                }
                if relations.id(&l.relation).is_none() {
                    return Err(CorpusError::invalid(id, format!("unknown discourse relation `{}`", l.relation)));
                }
            }
        }
        Ok(())
    }
}

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Conversation, CorpusError, DiscourseLink, Speaker};

/// Default closed set of dialogue discourse relations.
pub const DEFAULT_RELATIONS: [&str; 16] = [
    "QAP",
    "Continuation",
    "Elaboration",
    "Acknowledgement",
    "Clarification-Q",
    "Comment",
    "Contrast",
    "Correction",
    "Explanation",
    "Narration",
    "Parallel",
    "Q-Elab",
    "Result",
    "Alternation",
    "Background",
    "Conditional",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocab {
    labels: Vec<String>,
}

impl Default for RelationVocab {
    fn default() -> Self {
        RelationVocab { labels: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect() }
    }
}

impl RelationVocab {
    pub fn new(labels: Vec<String>) -> Result<Self, CorpusError> {
        if labels.is_empty() {
            return Err(CorpusError::Config("relation vocabulary is empty".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(CorpusError::Config(alloc::format!("duplicate relation label `{}`", l)));
            }
        }
        Ok(RelationVocab { labels })
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Chains adjacent responses: interlocutor-then-candidate pairs become `QAP`,
/// every other pair `Continuation`.
pub fn infer_links_fallback(conversation: &Conversation) -> Vec<DiscourseLink> {
    conversation
        .responses
        .windows(2)
        .map(|w| {
            let relation = match (w[0].speaker, w[1].speaker) {
                (Speaker::Interlocutor, Speaker::Candidate) => "QAP",
                _ => "Continuation",
            };
            DiscourseLink { src: w[0].index, dst: w[1].index, relation: relation.to_string() }
        })
        .collect()
}

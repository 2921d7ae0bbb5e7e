use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// SST score (1..=9) to CEFR group table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CefrMap {
    groups: Vec<String>,
}

impl Default for CefrMap {
    fn default() -> Self {
        CefrMap { groups: ["A1", "A1", "A2", "A2", "B1", "B1", "B2", "B2", "C1"].iter().map(|s| s.to_string()).collect() }
    }
}

impl CefrMap {
    pub fn new(groups: Vec<String>) -> Result<Self, CorpusError> {
        if groups.len() != 9 {
            return Err(CorpusError::Config(alloc::format!("CEFR map needs 9 entries, got {}", groups.len())));
        }
        Ok(CefrMap { groups })
    }

    pub fn group(&self, score: u8) -> &str {
        &self.groups[(score.clamp(1, 9) - 1) as usize]
    }

    /// Distinct group labels in order of first appearance over scores 1..=9.
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for g in &self.groups {
            if !out.contains(&g.as_str()) {
                out.push(g);
            }
        }
        out
    }

    /// Position of the score's group in [`CefrMap::labels`].
    pub fn group_index(&self, score: u8) -> usize {
        let g = self.group(score);
        self.labels().iter().position(|l| *l == g).expect("label list covers every group")
    }
}

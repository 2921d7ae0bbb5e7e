//! Data directories: `train.jsonl`, `dev.jsonl`, `test.jsonl`, and optionally
//! `stage1.jsonl` and `words.txt`.

use std::path::Path;

use hiergrade_core::corpus::Conversation;
use hiergrade_core::graph::WordVecTable;

use crate::config::RunConfig;
use crate::formats::{read_corpus, read_text_file, read_word_vectors, write_corpus};
use crate::Result;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const STAGE1_FILE: &str = "stage1.jsonl";
pub const WORDS_FILE: &str = "words.txt";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Conversation>,
    pub dev: Vec<Conversation>,
    pub test: Vec<Conversation>,
    pub stage1: Option<Vec<Conversation>>,
    pub words: Option<WordVecTable>,
}

impl Dataset {
    pub fn load(dir: &Path, config: &RunConfig) -> Result<Self> {
        let opts = config.parse_options()?;
        let train = read_corpus(&dir.join(TRAIN_FILE), &opts)?;
        let dev = read_corpus(&dir.join(DEV_FILE), &opts)?;
        let test = read_corpus(&dir.join(TEST_FILE), &opts)?;
        let s1 = dir.join(STAGE1_FILE);
        let stage1 = if s1.exists() { Some(read_corpus(&s1, &config.stage1_parse_options()?)?) } else { None };
        let w = dir.join(WORDS_FILE);
        let words = if w.exists() { Some(read_text_file(&w, read_word_vectors)?) } else { None };
        log::info!(
            "loaded {}: train {} dev {} test {} stage1 {}",
            dir.display(),
            train.len(),
            dev.len(),
            test.len(),
            stage1.as_ref().map_or(0, Vec::len)
        );
        Ok(Dataset { train, dev, test, stage1, words })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(crate::io_err(dir))?;
        write_corpus(&dir.join(TRAIN_FILE), &self.train)?;
        write_corpus(&dir.join(DEV_FILE), &self.dev)?;
        write_corpus(&dir.join(TEST_FILE), &self.test)?;
        if let Some(s) = &self.stage1 {
            write_corpus(&dir.join(STAGE1_FILE), s)?;
        }
        Ok(())
    }
}

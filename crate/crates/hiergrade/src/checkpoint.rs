//! Checkpoint directories: `model.json`, `vocab.txt`, `words.txt` and `params.hgck`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use hiergrade_core::model::{GradingModel, ModelConfig};
use hiergrade_core::tensor::{encode_params, load_into};
use hiergrade_core::ParamStore;

use crate::formats::{read_vocab, read_word_vectors, write_vocab, write_word_vectors};
use crate::{io_err, Error, Result};

pub const MODEL_FILE: &str = "model.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const WORDS_FILE: &str = "words.txt";
pub const PARAMS_FILE: &str = "params.hgck";

pub fn save_checkpoint(dir: &Path, model: &GradingModel, store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(MODEL_FILE);
    let json = serde_json::to_string_pretty(&model.config).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&p, json).map_err(io_err(&p))?;
    let p = dir.join(VOCAB_FILE);
    write_vocab(&model.vocab, BufWriter::new(File::create(&p).map_err(io_err(&p))?)).map_err(io_err(&p))?;
    let p = dir.join(WORDS_FILE);
    write_word_vectors(&model.words, BufWriter::new(File::create(&p).map_err(io_err(&p))?)).map_err(io_err(&p))?;
    let p = dir.join(PARAMS_FILE);
    fs::write(&p, encode_params(store)).map_err(io_err(&p))?;
    Ok(())
}

/// Rebuilds the model and overwrites its freshly initialized parameters with
/// the saved ones. Fails if any name or shape disagrees.
pub fn load_checkpoint(dir: &Path) -> Result<(GradingModel, ParamStore)> {
    let p = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let config: ModelConfig =
        serde_json::from_str(&text).map_err(|e| Error::Parse { source_name: p.display().to_string(), line: e.line(), reason: e.to_string() })?;
    let p = dir.join(VOCAB_FILE);
    let vocab = read_vocab(BufReader::new(File::open(&p).map_err(io_err(&p))?), &p.display().to_string())?;
    let p = dir.join(WORDS_FILE);
    let words = read_word_vectors(BufReader::new(File::open(&p).map_err(io_err(&p))?), &p.display().to_string())?;
    let mut store = ParamStore::new();
    let model = GradingModel::new(&config, vocab, Some(words), &mut store, 0)?;
    let p = dir.join(PARAMS_FILE);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    load_into(&mut store, &bytes)?;
    Ok((model, store))
}

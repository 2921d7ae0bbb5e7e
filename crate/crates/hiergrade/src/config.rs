//! TOML run configuration.

use std::path::Path;

use hiergrade_core::corpus::{CefrMap, RelationVocab, SynthConfig, Tokenizer, DEFAULT_FILLED_PAUSES};
use hiergrade_core::encoder::EncoderConfig;
use hiergrade_core::model::ModelConfig;
use hiergrade_core::pipeline::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::formats::ParseOptions;
use crate::{io_err, Error, Result};

/// Everything one `train`, `evaluate` or `ablate` invocation needs besides data.
///
/// ```toml
/// [model]
/// d_h = 64
/// variant = "B+CDA"
///
/// [train]
/// repeats = 5
/// max_epochs = 30
///
/// [data]
/// stage1_score_range = [0.0, 5.0]
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Score range of the stage-1 corpus, mapped onto 1..=9.
    pub stage1_score_range: Option<[f64; 2]>,
    pub filled_pauses: Vec<String>,
    /// CEFR group label of each score 1..=9.
    pub cefr_groups: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            stage1_score_range: None,
            filled_pauses: DEFAULT_FILLED_PAUSES.iter().map(|s| s.to_string()).collect(),
            cefr_groups: (1..=9).map(|s| CefrMap::default().group(s).to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {}", path.display(), m)),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.inventory()?;
        self.model.gat.validate(self.model.d_h)?;
        EncoderConfig { vocab_size: 4, embed_dim: self.model.d_h, ..self.model.encoder.clone() }.validate()?;
        self.cefr()?;
        RelationVocab::new(self.model.relations.clone())?;
        if let Some([lo, hi]) = self.data.stage1_score_range {
            if !(hi > lo) {
                return Err(Error::Config(format!("stage1_score_range [{}, {}] is empty", lo, hi)));
            }
        }
        Ok(())
    }

    pub fn cefr(&self) -> Result<CefrMap> {
        Ok(CefrMap::new(self.data.cefr_groups.clone())?)
    }

    pub fn parse_options(&self) -> Result<ParseOptions> {
        Ok(ParseOptions {
            tokenizer: Tokenizer::new(self.data.filled_pauses.clone()),
            relations: RelationVocab::new(self.model.relations.clone())?,
            score_range: None,
        })
    }

    pub fn stage1_parse_options(&self) -> Result<ParseOptions> {
        Ok(ParseOptions { score_range: self.data.stage1_score_range.map(|[lo, hi]| (lo, hi)), ..self.parse_options()? })
    }
}

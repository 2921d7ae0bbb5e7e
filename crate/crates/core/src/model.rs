//! The full grading model: sequence encoder, graph initialization, graph
//! attention, and the regressor, wired per the configured inventory.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, RelationVocab, DEFAULT_RELATIONS};
use crate::encoder::{assemble_sequence, mean_pool, mean_pool_spans, EncoderConfig, EncoderParams, SequenceBatch, Vocab, UNK};
use crate::gnn::{encode_bundle, EdgeIndex, Fusion, GatConfig, GnnParams, GraphInput};
use crate::graph::{GraphBundle, GraphInitParams, GraphOptions, NgramConfig, NgramEncoder, NodeInitConfig, WordVecTable};
use crate::scorer::{Inventory, Member, Regressor, RegressorConfig};
use crate::tensor::{ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width `D_H` shared by every component.
    pub d_h: usize,
    /// Inventory variant, e.g. `B+CDA`, `B`, `C+D`.
    pub variant: String,
    pub encoder: EncoderConfig,
    pub ngram: NgramConfig,
    pub nodes: NodeInitConfig,
    pub gat: GatConfig,
    pub regressor: RegressorConfig,
    pub fusion: Fusion,
    pub graph: GraphOptions,
    pub relations: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_h: 64,
            variant: "B+CDA".into(),
            encoder: EncoderConfig::default(),
            ngram: NgramConfig::default(),
            nodes: NodeInitConfig::default(),
            gat: GatConfig::default(),
            regressor: RegressorConfig::default(),
            fusion: Fusion::Mean,
            graph: GraphOptions::default(),
            relations: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ModelConfig {
    pub fn inventory(&self) -> Result<Inventory> {
        Inventory::parse(&self.variant)
    }

    pub fn with_variant(&self, variant: &str) -> Self {
        ModelConfig { variant: variant.into(), ..self.clone() }
    }
}

/// Everything a forward pass needs from one conversation, computed once.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub score: f64,
    pub batch: SequenceBatch,
    /// Vocabulary ids of each kept response (a lone UNK for empty responses).
    pub response_ids: Vec<Vec<usize>>,
    pub bundle: GraphBundle,
    pub edges: [EdgeIndex; 3],
}

/// Parameter handles of one model variant. Values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradingModel {
    pub config: ModelConfig,
    pub inventory: Inventory,
    pub vocab: Vocab,
    pub words: WordVecTable,
    pub relations: RelationVocab,
    pub encoder: EncoderParams,
    pub ngram: Option<NgramEncoder>,
    pub graph_init: Option<GraphInitParams>,
    pub gnn: Option<GnnParams>,
    pub regressor: Regressor,
}

impl GradingModel {
    /// Registers all parameters in `store` (which should be empty), drawing
    /// initial values from `seed`. Without a word-vector table, random
    /// vectors are drawn for the vocabulary.
    pub fn new(
        config: &ModelConfig,
        vocab: Vocab,
        words: Option<WordVecTable>,
        store: &mut ParamStore,
        seed: u64,
    ) -> Result<Self> {
        let inventory = config.inventory()?;
        let relations = RelationVocab::new(config.relations.clone())?;
        let d_h = config.d_h;
        config.gat.validate(d_h)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_cfg = EncoderConfig { vocab_size: vocab.len(), embed_dim: d_h, ..config.encoder.clone() };
        let encoder = EncoderParams::new(store, &mut rng, "encoder", &enc_cfg)?;
        let enabled = [
            inventory.contains(Member::Semantic),
            inventory.contains(Member::Action),
            inventory.contains(Member::Discourse),
        ];
        let words = match words {
            Some(w) => {
                if w.dim() != config.nodes.word_dim {
                    return Err(Error::Config(format!(
                        "word vectors have dim {}, config expects {}",
                        w.dim(),
                        config.nodes.word_dim
                    )));
                }
                w
            }
            None => {
                let mut toks: Vec<&str> = vocab.tokens()[3..].iter().map(String::as_str).collect();
                if toks.is_empty() {
                    toks.push("<unk>");
                }
                WordVecTable::random(&toks, config.nodes.word_dim, seed ^ 0x5eed)?
            }
        };
        let (ngram, graph_init, gnn) = if enabled.iter().any(|e| *e) {
            (
                Some(NgramEncoder::new(store, &mut rng, "ngram", vocab.len(), d_h, &config.ngram)?),
                Some(GraphInitParams::new(store, &mut rng, "graph", d_h, &config.nodes, &relations, enabled)?),
                Some(GnnParams::new(store, &mut rng, "gnn", d_h, &config.gat, enabled, config.fusion)?),
            )
        } else {
            (None, None, None)
        };
        let regressor = Regressor::new(store, &mut rng, "regressor", &inventory, d_h, &config.regressor)?;
        Ok(GradingModel {
            config: config.clone(),
            inventory,
            vocab,
            words,
            relations,
            encoder,
            ngram,
            graph_init,
            gnn,
            regressor,
        })
    }

    pub fn uses_graphs(&self) -> bool {
        self.gnn.is_some()
    }

    /// Tokenizes, truncates and builds graphs for `conv`.
    pub fn prepare(&self, conv: &Conversation) -> Result<PreparedExample> {
        let batch = assemble_sequence(conv, &self.vocab, &self.encoder.config)?;
        let kept = batch.spans.len();
        let truncated;
        let conv = if kept < conv.responses.len() {
            let mut c = conv.clone();
            c.responses.truncate(kept);
            for r in &mut c.responses {
                if let Some(l) = &mut r.out_links {
                    l.retain(|l| l.dst < kept);
                }
            }
            truncated = c;
            &truncated
        } else {
            conv
        };
        let response_ids = conv
            .responses
            .iter()
            .map(|r| {
                if r.tokens.is_empty() {
                    alloc::vec![UNK]
                } else {
                    r.tokens.iter().map(|t| self.vocab.id(t)).collect()
                }
            })
            .collect();
        let bundle = GraphBundle::build(conv, &self.config.graph);
        let edges = [
            EdgeIndex::of(&bundle.semantic),
            EdgeIndex::of(&bundle.action),
            EdgeIndex::of(&bundle.discourse),
        ];
        Ok(PreparedExample {
            id: conv.id.clone(),
            score: f64::from(conv.sst_score),
            batch,
            response_ids,
            bundle,
            edges,
        })
    }

    pub fn prepare_all(&self, convs: &[Conversation]) -> Result<Vec<PreparedExample>> {
        convs.iter().map(|c| self.prepare(c)).collect()
    }

    /// The inventory embeddings, each `(1, D_H)`, in inventory order.
    pub fn inventory_embeddings(
        &self,
        tape: &mut Tape<'_>,
        ex: &PreparedExample,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<Var>> {
        let h_b = self.encoder.encode(tape, &ex.batch, rng.as_deref_mut())?;
        let mut out = Vec::with_capacity(4);
        if self.inventory.contains(Member::Sequence) {
            out.push(if self.encoder.config.pool_skip_separators {
                mean_pool_spans(tape, h_b, &ex.batch.spans)?
            } else {
                mean_pool(tape, h_b)?
            });
        }
        let (Some(ngram), Some(init), Some(gnn)) = (&self.ngram, &self.graph_init, &self.gnn) else {
            return Ok(out);
        };
        let mut rows = Vec::with_capacity(ex.response_ids.len());
        for ids in &ex.response_ids {
            rows.push(ngram.forward(tape, ids)?);
        }
        let ngm = tape.concat(&rows, 0)?;
        let responses = init.init_response_nodes(tape, h_b, &ex.batch.spans, ngm)?;
        let mut inputs: [Option<GraphInput<'_>>; 3] = [None, None, None];
        for (k, (g, member)) in ex
            .bundle
            .graphs()
            .into_iter()
            .zip([Member::Semantic, Member::Action, Member::Discourse])
            .enumerate()
        {
            if self.inventory.contains(member) {
                let rest = init.init_rest(tape, g, &self.words)?;
                inputs[k] = Some(GraphInput { graph: g, edges: &ex.edges[k], rest });
            }
        }
        let [c, a, d] = inputs;
        let ro = encode_bundle(tape, gnn, responses, c, a, d, rng)?;
        out.extend([ro.semantic, ro.action, ro.discourse].into_iter().flatten());
        Ok(out)
    }

    /// `Ŷ` as a `(1, 1)` node. Passing `rng` enables training-time dropout.
    pub fn forward(&self, tape: &mut Tape<'_>, ex: &PreparedExample, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let inputs = self.inventory_embeddings(tape, ex, rng)?;
        self.regressor.regress(tape, &inputs)
    }

    /// Inference-only prediction.
    pub fn predict(&self, store: &ParamStore, ex: &PreparedExample) -> Result<f64> {
        let mut tape = Tape::new(store);
        let y = self.forward(&mut tape, ex, None)?;
        Ok(tape.value(y).item().expect("scalar prediction"))
    }
}

//! Initial node states: word vectors, SPO spans, intents, discourse
//! relations, global nodes, and the response nodes built from the sequence
//! encoder output and an n-gram encoder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphKind, HeteroGraph, NodeKind, Payload};
use crate::corpus::RelationVocab;
use crate::nn::{self, BiLstm, Linear};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Frozen word vectors with a table-mean fallback for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVecTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    mean: Vec<f64>,
}

impl WordVecTable {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() || dim == 0 {
            return Err(Error::Config("word-vector table is empty".into()));
        }
        let mut mean = vec![0.0; dim];
        let mut vectors = BTreeMap::new();
        for (tok, v) in entries {
            if v.len() != dim {
                return Err(Error::Config(format!("vector for `{}` has {} values, expected {}", tok, v.len(), dim)));
            }
            if vectors.insert(tok.clone(), v).is_some() {
                return Err(Error::Config(format!("token `{}` listed twice", tok)));
            }
        }
        for v in vectors.values() {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = vectors.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(WordVecTable { dim, vectors, mean })
    }

    /// Deterministic random vectors (uniform in `[-1, 1)`) for `tokens`.
    pub fn random<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = tokens
            .iter()
            .map(|t| (String::from(t.as_ref()), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        WordVecTable::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Vector for `token`, or the table mean when it is unknown.
    pub fn lookup(&self, token: &str) -> &[f64] {
        self.vectors.get(token).map_or(&self.mean, Vec::as_slice)
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.mean
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Mean of the vectors of `tokens` (table mean for an empty list).
    pub fn mean_of<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        if tokens.is_empty() {
            return self.mean.clone();
        }
        let mut out = vec![0.0; self.dim];
        for t in tokens {
            for (o, x) in out.iter_mut().zip(self.lookup(t.as_ref())) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= tokens.len() as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramConfig {
    pub embed_dim: usize,
    /// Output channels per kernel width.
    pub channels: usize,
    pub widths: Vec<usize>,
    /// Hidden size of each LSTM direction.
    pub lstm_hidden: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig { embed_dim: 32, channels: 32, widths: vec![2, 3, 4], lstm_hidden: 16 }
    }
}

/// CNN-BiLSTM response encoder: max-pooled convolutions of several widths
/// and the final states of a BiLSTM over the token embeddings, concatenated
/// and projected to `D_H`.
#[derive(Debug, Clone)]
pub struct NgramEncoder {
    pub config: NgramConfig,
    pub embedding: ParamId,
    pub kernels: Vec<(ParamId, ParamId)>,
    pub lstm: BiLstm,
    pub proj: Linear,
}

impl NgramEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        vocab_size: usize,
        d_h: usize,
        config: &NgramConfig,
    ) -> Result<Self> {
        if config.widths.is_empty() || config.widths.contains(&0) || config.embed_dim == 0 || config.channels == 0 {
            return Err(Error::Config(format!("invalid n-gram encoder config {:?}", config)));
        }
        let e = config.embed_dim;
        let embedding = nn::uniform(store, rng, &format!("{}.emb", prefix), vocab_size, e, 0.1)?;
        let mut kernels = Vec::new();
        for &w in &config.widths {
            let k = store.add(
                &format!("{}.conv{}.w", prefix, w),
                crate::tensor::xavier_uniform(w * e, config.channels, rng),
            )?;
            let b = store.add(&format!("{}.conv{}.b", prefix, w), Tensor::zeros(&[1, config.channels]))?;
            kernels.push((k, b));
        }
        let lstm = BiLstm::new(store, rng, &format!("{}.lstm", prefix), e, config.lstm_hidden)?;
        let feat = config.widths.len() * config.channels + 2 * config.lstm_hidden;
        let proj = Linear::new(store, rng, &format!("{}.proj", prefix), feat, d_h)?;
        Ok(NgramEncoder { config: config.clone(), embedding, kernels, lstm, proj })
    }

    /// `H^s_ngm` for one response, `(1, D_H)`.
    pub fn forward(&self, tape: &mut Tape<'_>, token_ids: &[usize]) -> Result<Var> {
        if token_ids.is_empty() {
            return Err(Error::Contract("n-gram embedding of an empty response".into()));
        }
        let table = tape.param(self.embedding);
        let x = tape.embedding_lookup(table, token_ids)?;
        let mut feats = Vec::with_capacity(self.kernels.len() + 2);
        for (&(k, b), &w) in self.kernels.iter().zip(&self.config.widths) {
            let (kv, bv) = (tape.param(k), tape.param(b));
            let c = tape.conv1d(x, kv, bv, w)?;
            let c = tape.relu(c);
            feats.push(tape.max_pool_rows(c)?);
        }
        let h = self.lstm.forward(tape, x)?;
        let hid = self.lstm.hidden;
        let l = token_ids.len();
        let last = tape.slice_rows(h, l - 1..l)?;
        feats.push(tape.slice_cols(last, 0..hid)?);
        let first = tape.slice_rows(h, 0..1)?;
        feats.push(tape.slice_cols(first, hid..2 * hid)?);
        let f = tape.concat(&feats, 1)?;
        Ok(self.proj.forward(tape, f)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeInitConfig {
    /// Width of the frozen word vectors.
    pub word_dim: usize,
}

impl Default for NodeInitConfig {
    fn default() -> Self {
        NodeInitConfig { word_dim: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct SemanticInit {
    pub word_proj: Linear,
    pub global: ParamId,
}

#[derive(Debug, Clone)]
pub struct ActionInit {
    pub spo_proj: Linear,
    pub role_emb: ParamId,
    pub intent: ParamId,
    pub global: ParamId,
}

#[derive(Debug, Clone)]
pub struct DiscourseInit {
    pub relation_emb: ParamId,
    pub global: ParamId,
}

/// Parameters of the response-node MLP and of every enabled graph's
/// node initializers.
#[derive(Debug, Clone)]
pub struct GraphInitParams {
    pub d_h: usize,
    pub response_mlp: (Linear, Linear),
    pub semantic: Option<SemanticInit>,
    pub action: Option<ActionInit>,
    pub discourse: Option<DiscourseInit>,
    pub relations: RelationVocab,
}

impl GraphInitParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        d_h: usize,
        config: &NodeInitConfig,
        relations: &RelationVocab,
        enabled: [bool; 3],
    ) -> Result<Self> {
        let name = |s: &str| format!("{}.{}", prefix, s);
        let response_mlp = (
            Linear::new(store, rng, &name("response_mlp.0"), 2 * d_h, d_h)?,
            Linear::new(store, rng, &name("response_mlp.1"), d_h, d_h)?,
        );
        let semantic = if enabled[0] {
            Some(SemanticInit {
                word_proj: Linear::new(store, rng, &name("c.word_proj"), config.word_dim, d_h)?,
                global: nn::uniform(store, rng, &name("c.global"), 1, d_h, 0.1)?,
            })
        } else {
            None
        };
        let action = if enabled[1] {
            Some(ActionInit {
                spo_proj: Linear::new(store, rng, &name("a.spo_proj"), config.word_dim, d_h)?,
                role_emb: nn::uniform(store, rng, &name("a.role_emb"), 3, d_h, 0.1)?,
                intent: nn::uniform(store, rng, &name("a.intent"), 1, d_h, 0.1)?,
                global: nn::uniform(store, rng, &name("a.global"), 1, d_h, 0.1)?,
            })
        } else {
            None
        };
        let discourse = if enabled[2] {
            Some(DiscourseInit {
                relation_emb: nn::uniform(store, rng, &name("d.relation_emb"), relations.len(), d_h, 0.1)?,
                global: nn::uniform(store, rng, &name("d.global"), 1, d_h, 0.1)?,
            })
        } else {
            None
        };
        Ok(GraphInitParams { d_h, response_mlp, semantic, action, discourse, relations: relations.clone() })
    }

    /// Response states `H^s_0 = MLP([mean(H^B[p_start..p_end]) ; H^s_ngm]) + H^s_ngm`,
    /// one row per span. `ngram` is `(R, D_H)`.
    pub fn init_response_nodes(
        &self,
        tape: &mut Tape<'_>,
        h_b: Var,
        spans: &[(usize, usize)],
        ngram: Var,
    ) -> Result<Var> {
        let t_len = tape.value(h_b).rows();
        let r = spans.len();
        if tape.value(ngram).rows() != r {
            return Err(Error::Contract(format!(
                "{} n-gram rows for {} response spans",
                tape.value(ngram).rows(),
                r
            )));
        }
        let mut pool = vec![0.0; r * t_len];
        for (i, &(s, e)) in spans.iter().enumerate() {
            if s >= e || e > t_len {
                return Err(Error::Contract(format!("response {} span [{}, {}) outside {} rows", i, s, e, t_len)));
            }
            let w = 1.0 / (e - s) as f64;
            pool[i * t_len + s..i * t_len + e].iter_mut().for_each(|v| *v = w);
        }
        let p = tape.constant(Tensor::raw(r, t_len, pool));
        let pooled = tape.matmul(p, h_b)?;
        let x = tape.concat(&[pooled, ngram], 1)?;
        let h = self.response_mlp.0.forward(tape, x)?;
        let h = tape.relu(h);
        let h = self.response_mlp.1.forward(tape, h)?;
        Ok(tape.add(h, ngram)?)
    }

    /// Full initial state matrix of `graph`, rows in node order. `responses`
    /// holds the response rows (`(R, D_H)`).
    pub fn init_graph(
        &self,
        tape: &mut Tape<'_>,
        graph: &HeteroGraph,
        responses: Var,
        words: &WordVecTable,
    ) -> Result<Var> {
        let rest = self.init_rest(tape, graph, words)?;
        Ok(tape.concat(&[responses, rest], 0)?)
    }

    /// Initial states of every non-response node of `graph` (graph-specific
    /// nodes, then the global node).
    pub fn init_rest(&self, tape: &mut Tape<'_>, graph: &HeteroGraph, words: &WordVecTable) -> Result<Var> {
        let disabled = || Error::Contract(format!("graph {} is not enabled in this model", graph.kind.tag()));
        let r = graph.n_responses;
        let others = &graph.nodes[r..graph.global];
        let (body, global) = match graph.kind {
            GraphKind::Semantic => {
                let p = self.semantic.as_ref().ok_or_else(disabled)?;
                let mut data = Vec::with_capacity(others.len() * words.dim());
                for n in others {
                    let Payload::Word(tok) = &n.payload else {
                        return Err(Error::Contract(format!("unexpected {:?} node in the semantic graph", n.kind)));
                    };
                    data.extend_from_slice(words.lookup(tok));
                }
                let body = if others.is_empty() {
                    None
                } else {
                    let x = tape.constant(Tensor::raw(others.len(), words.dim(), data));
                    Some(p.word_proj.forward(tape, x)?)
                };
                (body, p.global)
            }
            GraphKind::Action => {
                let p = self.action.as_ref().ok_or_else(disabled)?;
                let body = if others.is_empty() {
                    None
                } else {
                    Some(self.action_rows(tape, p, others, words)?)
                };
                (body, p.global)
            }
            GraphKind::Discourse => {
                let p = self.discourse.as_ref().ok_or_else(disabled)?;
                let mut ids = Vec::with_capacity(others.len());
                for n in others {
                    let Payload::Discourse { relation, .. } = &n.payload else {
                        return Err(Error::Contract(format!("unexpected {:?} node in the discourse graph", n.kind)));
                    };
                    ids.push(
                        self.relations
                            .id(relation)
                            .ok_or_else(|| Error::Config(format!("unknown discourse relation `{}`", relation)))?,
                    );
                }
                let body = if ids.is_empty() {
                    None
                } else {
                    let table = tape.param(p.relation_emb);
                    Some(tape.embedding_lookup(table, &ids)?)
                };
                (body, p.global)
            }
        };
        let g = tape.param(global);
        match body {
            Some(b) => Ok(tape.concat(&[b, g], 0)?),
            None => Ok(g),
        }
    }

    fn action_rows(
        &self,
        tape: &mut Tape<'_>,
        p: &ActionInit,
        nodes: &[super::Node],
        words: &WordVecTable,
    ) -> Result<Var> {
        let mut spo_data = Vec::new();
        let mut roles = Vec::new();
        // position of each node inside [spo rows ; intent rows]
        let mut spo_pos = Vec::new();
        let mut intent_pos = Vec::new();
        for (k, n) in nodes.iter().enumerate() {
            match (&n.payload, n.kind) {
                (Payload::Spo { tokens, .. }, kind) => {
                    spo_data.extend(words.mean_of(tokens));
                    roles.push(match kind {
                        NodeKind::Subject => 0,
                        NodeKind::Predicate => 1,
                        _ => 2,
                    });
                    spo_pos.push(k);
                }
                (Payload::Intent { .. }, _) => intent_pos.push(k),
                _ => return Err(Error::Contract(format!("unexpected {:?} node in the action graph", n.kind))),
            }
        }
        let mut blocks = Vec::new();
        if !roles.is_empty() {
            let x = tape.constant(Tensor::raw(roles.len(), words.dim(), spo_data));
            let proj = p.spo_proj.forward(tape, x)?;
            let table = tape.param(p.role_emb);
            let role = tape.embedding_lookup(table, &roles)?;
            blocks.push(tape.add(proj, role)?);
        }
        if !intent_pos.is_empty() {
            let iv = tape.param(p.intent);
            blocks.push(tape.gather_rows(iv, &vec![0; intent_pos.len()])?);
        }
        let stacked = tape.concat(&blocks, 0)?;
        let mut order = vec![0; nodes.len()];
        for (j, &k) in spo_pos.iter().chain(&intent_pos).enumerate() {
            order[k] = j;
        }
        let identity = order.iter().enumerate().all(|(i, &j)| i == j);
        Ok(if identity { stacked } else { tape.gather_rows(stacked, &order)? })
    }
}

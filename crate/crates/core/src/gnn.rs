//! Multi-head graph attention over in-neighbors, with residual connections
//! and a position-wise feed-forward block, plus the bottom-to-top pass over
//! the three conversation graphs.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphKind, HeteroGraph};
use crate::nn::{self, Linear};
use crate::tensor::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    /// Layers per graph.
    pub layers: usize,
    pub heads: usize,
    pub slope: f64,
    /// Hidden width of the feed-forward block, as a multiple of `D_H`.
    pub ffn_mult: usize,
    /// Dropout on the feed-forward hidden layer, applied only in training.
    pub dropout: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig { layers: 2, heads: 4, slope: 0.2, ffn_mult: 4, dropout: 0.0 }
    }
}

impl GatConfig {
    pub fn validate(&self, d_h: usize) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || !d_h.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "need layers >= 1 and D_H ({}) divisible by heads ({})",
                d_h, self.heads
            )));
        }
        if !(self.slope > 0.0) || self.ffn_mult == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("invalid GAT config {:?}", self)));
        }
        Ok(())
    }
}

/// Edge endpoints as flat index arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndex {
    pub n_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl EdgeIndex {
    pub fn of(graph: &HeteroGraph) -> Self {
        EdgeIndex {
            n_nodes: graph.n_nodes(),
            src: graph.edges.iter().map(|e| e.src).collect(),
            dst: graph.edges.iter().map(|e| e.dst).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    /// `(D_H, D_H)`; head `h` uses columns `h*d..(h+1)*d`.
    pub w: ParamId,
    /// `(heads, d)` halves of the attention vectors: destination and source.
    pub a_dst: ParamId,
    pub a_src: ParamId,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub heads: usize,
    pub slope: f64,
    pub dropout: f64,
}

impl GatLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, prefix: &str, d_h: usize, cfg: &GatConfig) -> Result<Self> {
        cfg.validate(d_h)?;
        let d = d_h / cfg.heads;
        let w = store.add(&format!("{}.w", prefix), crate::tensor::xavier_uniform(d_h, d_h, rng))?;
        let lim = crate::math::sqrt(6.0 / (2 * d + 1) as f64);
        let a_dst = nn::uniform(store, rng, &format!("{}.a_dst", prefix), cfg.heads, d, lim)?;
        let a_src = nn::uniform(store, rng, &format!("{}.a_src", prefix), cfg.heads, d, lim)?;
        let d_ff = cfg.ffn_mult * d_h;
        let ffn_in = Linear::new(store, rng, &format!("{}.ffn.0", prefix), d_h, d_ff)?;
        let ffn_out = Linear::new(store, rng, &format!("{}.ffn.1", prefix), d_ff, d_h)?;
        Ok(GatLayer { w, a_dst, a_src, ffn_in, ffn_out, heads: cfg.heads, slope: cfg.slope, dropout: cfg.dropout })
    }

    /// Attention step: `s_i + ‖_h Σ_j α^h_ij W_h s_j` over in-neighbors `j`,
    /// with `α^h_i· = softmax_j leaky_relu(a_h · [W_h s_i ‖ W_h s_j])`.
    /// Nodes without in-edges keep their state.
    pub fn attend(&self, tape: &mut Tape<'_>, edges: &EdgeIndex, states: Var) -> Result<Var> {
        let (n, d_h) = tape.value(states).dims2();
        if n != edges.n_nodes {
            return Err(Error::Tensor(crate::TensorError::shape(
                "gat_layer",
                format!("{} state rows for {} nodes", n, edges.n_nodes),
            )));
        }
        if tape.params().get(self.w).rows() != d_h {
            return Err(Error::Tensor(crate::TensorError::shape(
                "gat_layer",
                format!("state width {} does not match weights", d_h),
            )));
        }
        if edges.src.is_empty() {
            return Ok(states);
        }
        let w = tape.param(self.w);
        let z = tape.matmul(states, w)?;
        let a_dst = tape.param(self.a_dst);
        let a_src = tape.param(self.a_src);
        let f_dst = tape.head_dot(z, a_dst)?;
        let f_src = tape.head_dot(z, a_src)?;
        let e_dst = tape.gather_rows(f_dst, &edges.dst)?;
        let e_src = tape.gather_rows(f_src, &edges.src)?;
        let logits = tape.add(e_dst, e_src)?;
        let logits = tape.leaky_relu(logits, self.slope);
        let alpha = tape.segment_softmax(logits, &edges.dst, n)?;
        let msgs = tape.gather_rows(z, &edges.src)?;
        let msgs = tape.head_scale(msgs, alpha)?;
        let agg = tape.scatter_add_rows(msgs, &edges.dst, n)?;
        Ok(tape.add(states, agg)?)
    }

    /// Position-wise `x + W_2 relu(W_1 x + b_1) + b_2`.
    pub fn ffn(&self, tape: &mut Tape<'_>, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let h = self.ffn_in.forward(tape, x)?;
        let h = tape.relu(h);
        let h = nn::dropout(tape, h, self.dropout, rng)?;
        let y = self.ffn_out.forward(tape, h)?;
        Ok(tape.add(x, y)?)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, edges: &EdgeIndex, states: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let s = self.attend(tape, edges, states)?;
        self.ffn(tape, s, rng)
    }
}

/// Layer stack of one graph.
#[derive(Debug, Clone)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
}

impl GatStack {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, prefix: &str, d_h: usize, cfg: &GatConfig) -> Result<Self> {
        let layers = (0..cfg.layers)
            .map(|l| GatLayer::new(store, rng, &format!("{}.{}", prefix, l), d_h, cfg))
            .collect::<Result<_>>()?;
        Ok(GatStack { layers })
    }

    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        edges: &EdgeIndex,
        mut states: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        for l in &self.layers {
            states = l.forward(tape, edges, states, rng.as_deref_mut())?;
        }
        Ok(states)
    }
}

/// How refined response states of the lower graphs seed the discourse graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Mean of the enabled lower graphs' refined response rows.
    #[default]
    Mean,
    /// Concatenate both refined rows and project back to `D_H`.
    ConcatProject,
    /// Ignore the lower graphs and use the initial response states.
    Raw,
}

/// GAT stacks for the enabled graphs and the stage-2 combiner.
#[derive(Debug, Clone)]
pub struct GnnParams {
    pub semantic: Option<GatStack>,
    pub action: Option<GatStack>,
    pub discourse: Option<GatStack>,
    pub fusion: Fusion,
    pub fuse_proj: Option<Linear>,
}

impl GnnParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        d_h: usize,
        cfg: &GatConfig,
        enabled: [bool; 3],
        fusion: Fusion,
    ) -> Result<Self> {
        let mut stack = |on: bool, tag: &str| -> Result<Option<GatStack>> {
            if on {
                Ok(Some(GatStack::new(store, rng, &format!("{}.{}", prefix, tag), d_h, cfg)?))
            } else {
                Ok(None)
            }
        };
        let semantic = stack(enabled[0], "c")?;
        let action = stack(enabled[1], "a")?;
        let discourse = stack(enabled[2], "d")?;
        let fuse_proj = if fusion == Fusion::ConcatProject && enabled == [true, true, true] {
            Some(Linear::new(store, rng, &format!("{}.fuse", prefix), 2 * d_h, d_h)?)
        } else {
            None
        };
        Ok(GnnParams { semantic, action, discourse, fusion, fuse_proj })
    }

    pub fn stack(&self, kind: GraphKind) -> Option<&GatStack> {
        match kind {
            GraphKind::Semantic => self.semantic.as_ref(),
            GraphKind::Action => self.action.as_ref(),
            GraphKind::Discourse => self.discourse.as_ref(),
        }
    }
}

/// Per-graph input to [`encode_bundle`]: structure plus the initial states of
/// the non-response nodes.
pub struct GraphInput<'g> {
    pub graph: &'g HeteroGraph,
    pub edges: &'g EdgeIndex,
    pub rest: Var,
}

/// Final global-node states (`(1, D_H)`) of the enabled graphs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Readouts {
    pub semantic: Option<Var>,
    pub action: Option<Var>,
    pub discourse: Option<Var>,
}

fn run_graph(
    tape: &mut Tape<'_>,
    stack: &GatStack,
    input: &GraphInput<'_>,
    responses: Var,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Var)> {
    let r = input.graph.n_responses;
    if tape.value(responses).rows() != r {
        return Err(Error::Contract(format!(
            "graph {} has {} response nodes but {} response states were given",
            input.graph.kind.tag(),
            r,
            tape.value(responses).rows()
        )));
    }
    let states = tape.concat(&[responses, input.rest], 0)?;
    let out = stack.forward(tape, input.edges, states, rng)?;
    let g = input.graph.global;
    let readout = tape.slice_rows(out, g..g + 1)?;
    let refined = tape.slice_rows(out, 0..r)?;
    Ok((readout, refined))
}

/// Bottom-to-top pass: the word and action graphs refine the initial response
/// states; their refined rows (combined per `params.fusion`) seed the
/// response nodes of the discourse graph; readouts are global-node states.
pub fn encode_bundle(
    tape: &mut Tape<'_>,
    params: &GnnParams,
    responses: Var,
    semantic: Option<GraphInput<'_>>,
    action: Option<GraphInput<'_>>,
    discourse: Option<GraphInput<'_>>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Readouts> {
    let missing = |k: &str| Error::Contract(format!("graph {} supplied but not enabled in the model", k));
    let mut out = Readouts::default();
    let mut refined = Vec::new();
    if let Some(input) = &semantic {
        let stack = params.semantic.as_ref().ok_or_else(|| missing("c"))?;
        let (ro, rf) = run_graph(tape, stack, input, responses, rng.as_deref_mut())?;
        out.semantic = Some(ro);
        refined.push(rf);
    }
    if let Some(input) = &action {
        let stack = params.action.as_ref().ok_or_else(|| missing("a"))?;
        let (ro, rf) = run_graph(tape, stack, input, responses, rng.as_deref_mut())?;
        out.action = Some(ro);
        refined.push(rf);
    }
    if let Some(input) = &discourse {
        let stack = params.discourse.as_ref().ok_or_else(|| missing("d"))?;
        let seed = match (params.fusion, refined.len()) {
            (Fusion::Raw, _) | (_, 0) => responses,
            (_, 1) => refined[0],
            (Fusion::ConcatProject, _) => {
                let proj = params.fuse_proj.as_ref().ok_or_else(|| missing("fuse"))?;
                let cat = tape.concat(&refined, 1)?;
                proj.forward(tape, cat)?
            }
            (Fusion::Mean, k) => {
                let s = tape.add(refined[0], refined[1])?;
                tape.scale(s, 1.0 / k as f64)
            }
        };
        let (ro, _) = run_graph(tape, stack, input, seed, rng)?;
        out.discourse = Some(ro);
    }
    Ok(out)
}

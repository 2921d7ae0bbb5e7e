//! Sequence encoder over the concatenated conversation.
//!
//! Tokens of all responses are joined with a separator, embedded (token +
//! segment + per-window position), and run through a BiLSTM inside
//! overlapping sliding windows. Rows covered by several windows are the mean
//! of those windows' outputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Conversation;
use crate::nn::{self, BiLstm};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SEP: usize = 2;
pub const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<sep>"];

/// Token ↔ id table with the three reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect()).unwrap()
    }
}

impl Vocab {
    /// Builds from an id-ordered token list whose first entries are the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::Config(format!("vocabulary must start with {:?}", RESERVED)));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{}` at id {}", t, i)));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Tokens seen at least `min_count` times, in first-appearance order.
    pub fn build(convs: &[Conversation], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for t in convs.iter().flat_map(|c| &c.responses).flat_map(|r| &r.tokens) {
            let n = counts.entry(t.as_str()).or_insert(0);
            if *n == 0 {
                order.push(t);
            }
            *n += 1;
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            order
                .into_iter()
                .filter(|t| counts[t] >= min_count.max(1) && !RESERVED.contains(t))
                .map(String::from),
        );
        Vocab::from_tokens(tokens).expect("reserved prefix and unique tokens")
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// What the segment embedding distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    /// Interlocutor vs candidate.
    #[default]
    Speaker,
    /// Response index (capped at `max_segments - 1`).
    ResponseIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub max_tokens: usize,
    pub window_len: usize,
    pub window_stride: usize,
    pub segment_mode: SegmentMode,
    /// Segment table size when `segment_mode` is `ResponseIndex`.
    pub max_segments: usize,
    /// Learned per-window position embedding.
    pub use_position: bool,
    /// Dropout on the summed input embeddings during training.
    pub dropout: f64,
    /// Leave separator rows out of the sequence-level mean pool.
    pub pool_skip_separators: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            embed_dim: 64,
            max_tokens: 1600,
            window_len: 256,
            window_stride: 128,
            segment_mode: SegmentMode::Speaker,
            max_segments: 64,
            use_position: true,
            dropout: 0.0,
            pool_skip_separators: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("embed_dim {} must be positive and even", self.embed_dim)));
        }
        if self.window_stride == 0 || self.window_stride > self.window_len || self.window_len > self.max_tokens {
            return Err(Error::Config(format!(
                "need 0 < stride ({}) <= window_len ({}) <= max_tokens ({})",
                self.window_stride, self.window_len, self.max_tokens
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab_size <= SEP {
            return Err(Error::Config(format!("vocab_size {} leaves no room for tokens", self.vocab_size)));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        match self.segment_mode {
            SegmentMode::Speaker => 2,
            SegmentMode::ResponseIndex => self.max_segments.max(1),
        }
    }
}

/// Model input for one conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceBatch {
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    /// `[p_start, p_end)` per kept response.
    pub spans: Vec<(usize, usize)>,
    /// Responses dropped to fit `max_tokens`.
    pub truncated: usize,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Concatenates responses with a separator between them. Responses that would
/// push the sequence past `max_tokens` are dropped whole, from the end.
/// Responses without tokens get a one-row span over a lone UNK id.
pub fn assemble_sequence(conv: &Conversation, vocab: &Vocab, config: &EncoderConfig) -> Result<SequenceBatch> {
    if conv.responses.is_empty() {
        return Err(Error::Contract(format!("conversation `{}` has no responses", conv.id)));
    }
    let mut b = SequenceBatch { token_ids: Vec::new(), segment_ids: Vec::new(), spans: Vec::new(), truncated: 0 };
    for (i, r) in conv.responses.iter().enumerate() {
        let n = r.tokens.len().max(1);
        let sep = usize::from(i > 0);
        if b.token_ids.len() + sep + n > config.max_tokens {
            b.truncated = conv.responses.len() - i;
            log::warn!(
                "conversation `{}`: dropped {} trailing responses beyond {} tokens",
                conv.id,
                b.truncated,
                config.max_tokens
            );
            break;
        }
        let seg = match config.segment_mode {
            SegmentMode::Speaker => r.speaker.segment(),
            SegmentMode::ResponseIndex => i.min(config.n_segments() - 1),
        };
        if sep == 1 {
            b.token_ids.push(SEP);
            b.segment_ids.push(seg);
        }
        let start = b.token_ids.len();
        if r.tokens.is_empty() {
            b.token_ids.push(UNK);
        } else {
            b.token_ids.extend(r.tokens.iter().map(|t| vocab.id(t)));
        }
        b.segment_ids.resize(b.token_ids.len(), seg);
        b.spans.push((start, b.token_ids.len()));
    }
    if b.spans.is_empty() {
        return Err(Error::Contract(format!(
            "conversation `{}`: first response alone exceeds {} tokens",
            conv.id, config.max_tokens
        )));
    }
    Ok(b)
}

/// Window ranges over `t_len` rows: starts at multiples of `stride`, stopping
/// after the first window that reaches the end.
pub fn window_plan(t_len: usize, window_len: usize, stride: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        out.push(start..(start + window_len).min(t_len));
        if start + window_len >= t_len {
            break;
        }
        start += stride;
    }
    out
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_emb: ParamId,
    pub segment_emb: ParamId,
    pub position_emb: Option<ParamId>,
    pub lstm: BiLstm,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, prefix: &str, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let token_emb = nn::uniform(store, rng, &format!("{}.token_emb", prefix), config.vocab_size, d, 0.1)?;
        let segment_emb = nn::uniform(store, rng, &format!("{}.segment_emb", prefix), config.n_segments(), d, 0.1)?;
        let position_emb = if config.use_position {
            Some(nn::uniform(store, rng, &format!("{}.position_emb", prefix), config.window_len, d, 0.1)?)
        } else {
            None
        };
        let lstm = BiLstm::new(store, rng, &format!("{}.lstm", prefix), d, d / 2)?;
        Ok(EncoderParams { config: config.clone(), token_emb, segment_emb, position_emb, lstm })
    }

    /// `H^B`, shape `(T, D_H)`. Passing `rng` enables input dropout.
    pub fn encode(&self, tape: &mut Tape<'_>, batch: &SequenceBatch, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let cfg = &self.config;
        let t_len = batch.token_ids.len();
        if t_len == 0 || t_len > cfg.max_tokens {
            return Err(Error::Contract(format!("sequence of {} tokens outside [1, {}]", t_len, cfg.max_tokens)));
        }
        if let Some(&bad) = batch.token_ids.iter().find(|&&t| t >= cfg.vocab_size) {
            return Err(Error::Contract(format!("token id {} outside vocabulary of {}", bad, cfg.vocab_size)));
        }
        let table = tape.param(self.token_emb);
        let tok = tape.embedding_lookup(table, &batch.token_ids)?;
        let seg_table = tape.param(self.segment_emb);
        let seg = tape.embedding_lookup(seg_table, &batch.segment_ids)?;
        let x = tape.add(tok, seg)?;
        let x = nn::dropout(tape, x, cfg.dropout, rng)?;
        let windows = window_plan(t_len, cfg.window_len, cfg.window_stride);
        let mut outs = Vec::with_capacity(windows.len());
        for w in &windows {
            let mut xw = if windows.len() == 1 { x } else { tape.slice_rows(x, w.clone())? };
            if let Some(pos) = self.position_emb {
                let table = tape.param(pos);
                let p = tape.slice_rows(table, 0..w.len())?;
                xw = tape.add(xw, p)?;
            }
            outs.push(self.lstm.forward(tape, xw)?);
        }
        if outs.len() == 1 {
            return Ok(outs[0]);
        }
        let stacked = tape.concat(&outs, 0)?;
        let idx: Vec<usize> = windows.iter().flat_map(|w| w.clone()).collect();
        let summed = tape.scatter_add_rows(stacked, &idx, t_len)?;
        let mut count = vec![0.0; t_len];
        for &i in &idx {
            count[i] += 1.0;
        }
        let inv = tape.constant(Tensor::raw(t_len, 1, count.iter().map(|c| 1.0 / c).collect()));
        Ok(tape.mul_col(summed, inv)?)
    }
}

/// `H^B_mp`: mean over rows, `(1, D_H)`.
pub fn mean_pool(tape: &mut Tape<'_>, h: Var) -> Result<Var> {
    if tape.value(h).rows() == 0 {
        return Err(Error::Contract("mean_pool of an empty sequence".into()));
    }
    Ok(tape.mean(h, 0)?)
}

/// Mean over the rows that fall inside response spans, `(1, D_H)`.
pub fn mean_pool_spans(tape: &mut Tape<'_>, h: Var, spans: &[(usize, usize)]) -> Result<Var> {
    let rows: Vec<usize> = spans.iter().flat_map(|&(s, e)| s..e).collect();
    if rows.is_empty() {
        return Err(Error::Contract("mean_pool of an empty sequence".into()));
    }
    let kept = tape.gather_rows(h, &rows)?;
    Ok(tape.mean(kept, 0)?)
}

/// Rows `[p_start, p_end)` of `H^B`.
pub fn slice_span(tape: &mut Tape<'_>, h: Var, p_start: usize, p_end: usize) -> Result<Var> {
    let t = tape.value(h).rows();
    if p_start >= p_end || p_end > t {
        return Err(Error::Contract(format!("span [{}, {}) outside {} rows", p_start, p_end, t)));
    }
    Ok(tape.slice_rows(h, p_start..p_end)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Response, Speaker};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv(texts: &[(Speaker, &str)]) -> Conversation {
        let rs = texts.iter().enumerate().map(|(i, (s, t))| Response::new(i, *s, t)).collect();
        Conversation::new("t", 5, rs)
    }

    fn cfg(vocab: &Vocab) -> EncoderConfig {
        EncoderConfig { vocab_size: vocab.len(), embed_dim: 8, ..EncoderConfig::default() }
    }

    #[test]
    fn assemble_layout() {
        let c = conv(&[(Speaker::Interlocutor, "a b c")]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let b = assemble_sequence(&c, &v, &cfg(&v)).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.spans, vec![(0, 3)]);
        assert!(b.segment_ids.iter().all(|s| *s == 0));

        let c = conv(&[(Speaker::Interlocutor, "a b c"), (Speaker::Candidate, "d e")]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let b = assemble_sequence(&c, &v, &cfg(&v)).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.token_ids[3], SEP);
        assert_eq!(b.spans, vec![(0, 3), (4, 6)]);
        assert_eq!(b.segment_ids[4..], [1, 1]);
    }

    #[test]
    fn truncates_whole_responses() {
        let c = conv(&[(Speaker::Interlocutor, "a b c"), (Speaker::Candidate, "d e f g")]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let config = EncoderConfig { max_tokens: 6, window_len: 4, window_stride: 2, ..cfg(&v) };
        let b = assemble_sequence(&c, &v, &config).unwrap();
        assert_eq!(b.spans, vec![(0, 3)]);
        assert_eq!(b.truncated, 1);
    }

    #[test]
    fn oov_maps_to_unk() {
        let v = Vocab::build(&[conv(&[(Speaker::Candidate, "known")])], 1);
        assert_eq!(v.id("unknown"), UNK);
        assert_eq!(v.id("known"), 3);
        assert!(Vocab::from_tokens(vec!["x".into()]).is_err());
    }

    #[test]
    fn windows() {
        assert_eq!(window_plan(1, 256, 128), vec![0..1]);
        assert_eq!(window_plan(300, 256, 128), vec![0..256, 128..300]);
        assert_eq!(window_plan(256, 256, 128), vec![0..256]);
        assert_eq!(window_plan(10, 4, 3), vec![0..4, 3..7, 6..10]);
    }

    #[test]
    fn encode_shapes_and_mean_pool() {
        let c = conv(&[(Speaker::Candidate, "x")]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let config = cfg(&v);
        let mut store = ParamStore::new();
        let p = EncoderParams::new(&mut store, &mut ChaCha8Rng::seed_from_u64(0), "enc", &config).unwrap();
        let b = assemble_sequence(&c, &v, &config).unwrap();
        let mut tape = Tape::new(&store);
        let h = p.encode(&mut tape, &b, None).unwrap();
        assert_eq!(tape.value(h).shape(), &[1, 8]);
        let m = mean_pool(&mut tape, h).unwrap();
        assert_eq!(tape.value(m).data(), tape.value(h).data());
        assert!(slice_span(&mut tape, h, 0, 2).is_err());
    }

    #[test]
    fn span_pool_skips_separators() {
        let c = conv(&[(Speaker::Interlocutor, "a b"), (Speaker::Candidate, "c")]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let config = cfg(&v);
        let mut store = ParamStore::new();
        let p = EncoderParams::new(&mut store, &mut ChaCha8Rng::seed_from_u64(1), "enc", &config).unwrap();
        let b = assemble_sequence(&c, &v, &config).unwrap();
        assert!(b.token_ids.contains(&SEP));
        let mut tape = Tape::new(&store);
        let h = p.encode(&mut tape, &b, None).unwrap();
        let m = mean_pool_spans(&mut tape, h, &b.spans).unwrap();
        let hv = tape.value(h).clone();
        let rows: Vec<usize> = (0..hv.rows()).filter(|&t| b.token_ids[t] != SEP).collect();
        for k in 0..8 {
            let want = rows.iter().map(|&t| hv.get2(t, k)).sum::<f64>() / rows.len() as f64;
            assert!((tape.value(m).get2(0, k) - want).abs() < 1e-14);
        }
        assert!(mean_pool_spans(&mut tape, h, &[]).is_err());
    }

    #[test]
    fn overlapping_rows_are_window_means() {
        let text: String = (0..10).map(|i| format!("w{} ", i % 4)).collect();
        let c = conv(&[(Speaker::Candidate, &text)]);
        let v = Vocab::build(std::slice::from_ref(&c), 1);
        let config = EncoderConfig { window_len: 4, window_stride: 3, max_tokens: 16, ..cfg(&v) };
        let mut store = ParamStore::new();
        let p = EncoderParams::new(&mut store, &mut ChaCha8Rng::seed_from_u64(1), "enc", &config).unwrap();
        let b = assemble_sequence(&c, &v, &config).unwrap();
        let mut tape = Tape::new(&store);
        let h = p.encode(&mut tape, &b, None).unwrap();
        let full = tape.value(h).clone();
        // each window run alone
        let single = |range: Range<usize>, tape: &mut Tape<'_>| {
            let sub = SequenceBatch {
                token_ids: b.token_ids[range.clone()].to_vec(),
                segment_ids: b.segment_ids[range].to_vec(),
                spans: vec![],
                truncated: 0,
            };
            let h = p.encode(tape, &sub, None).unwrap();
            tape.value(h).clone()
        };
        let w0 = single(0..4, &mut tape);
        let w1 = single(3..7, &mut tape);
        for k in 0..8 {
            let expect = (w0.get2(3, k) + w1.get2(0, k)) / 2.0;
            assert!((full.get2(3, k) - expect).abs() < 1e-12);
            assert!((full.get2(1, k) - w0.get2(1, k)).abs() < 1e-12);
        }
    }
}

//! Mini-batch training with gradient accumulation, learning-rate decay and
//! early stopping on validation loss.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Executor;
use crate::corpus::Conversation;
use crate::encoder::Vocab;
use crate::graph::WordVecTable;
use crate::math;
use crate::model::{GradingModel, ModelConfig, PreparedExample};
use crate::scorer::{compute_loss_weights, weighted_squared_error, LossWeights};
use crate::tensor::{adam_step, AdamState, Gradients, ParamStore, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    /// Initial learning rate of each repeat, cycled when there are more repeats.
    pub initial_lrs: Vec<f64>,
    pub lr_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub repeats: usize,
    /// Repeat `r` uses seed `base_seed + r`.
    pub base_seed: u64,
    /// Epochs of sequence-only posttraining when a stage-1 corpus is given.
    pub stage1_epochs: usize,
    pub vocab_min_count: usize,
    pub loss_weighting: LossWeighting,
    /// Examples per work unit. Results do not depend on the thread count.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            grad_accum_steps: 2,
            initial_lrs: alloc::vec![3e-3, 1e-3, 3e-4, 1e-4, 3e-5],
            lr_decay: 0.85,
            patience: 4,
            max_epochs: 30,
            repeats: 5,
            base_seed: 0,
            stage1_epochs: 3,
            vocab_min_count: 1,
            loss_weighting: LossWeighting::InverseFrequency,
            chunk_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.grad_accum_steps == 0 {
            return bad("grad_accum_steps must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1");
        }
        if self.initial_lrs.is_empty() || self.initial_lrs.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite()) {
            return bad("initial_lrs must be a non-empty list of positive values");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        Ok(())
    }

    /// Seed and initial learning rate of repeat `r`.
    pub fn run(&self, r: usize) -> RunSpec {
        RunSpec { seed: self.base_seed + r as u64, initial_lr: self.initial_lrs[r % self.initial_lrs.len()] }
    }

    pub fn lr_at(&self, initial_lr: f64, epoch: usize) -> f64 {
        initial_lr * math::powi(self.lr_decay, epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    #[default]
    InverseFrequency,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub seed: u64,
    pub initial_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    /// Validation (or training, without a validation set) loss before the first update.
    pub start_loss: f64,
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn render(&self) -> String {
        let mut out = format!("start loss {:.6}\n", self.start_loss);
        for e in &self.epochs {
            let _ = write!(
                out,
                "epoch {:>3} lr {:.3e} steps {:>4} train {:.6}",
                e.epoch + 1,
                e.lr,
                e.steps,
                e.train_loss
            );
            match e.val_loss {
                Some(v) => {
                    let _ = writeln!(out, " val {:.6}", v);
                }
                None => out.push('\n'),
            }
        }
        if self.stopped_early {
            out.push_str("stopped early\n");
        }
        out
    }
}

/// Stop when `patience` epochs in a row fail to improve on the best loss so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, bad: 0 }
    }

    /// Records one epoch's loss; returns true when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        self.bad >= self.patience
    }
}

fn chunk_ranges(n: usize, size: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(size).map(|s| (s, (s + size).min(n))).collect()
}

/// Loss and scaled gradients of a set of examples, reduced in chunk order.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradients<E: Executor>(
    model: &GradingModel,
    store: &ParamStore,
    examples: &[&PreparedExample],
    weights: &LossWeights,
    scale: f64,
    chunk_size: usize,
    dropout_seed: Option<u64>,
    exec: &E,
    grads: &mut Gradients,
) -> Result<f64> {
    let chunks = chunk_ranges(examples.len(), chunk_size);
    let parts = exec.map(chunks.len(), |c| -> Result<(Gradients, f64)> {
        let (s, e) = chunks[c];
        let mut g = Gradients::new();
        let mut loss = 0.0;
        for (k, ex) in examples[s..e].iter().enumerate() {
            let mut tape = Tape::new(store);
            let mut rng = dropout_seed.map(|d| ChaCha8Rng::seed_from_u64(d ^ ((s + k) as u64).wrapping_mul(0x9e37_79b9)));
            let y = model.forward(&mut tape, ex, rng.as_mut())?;
            let l = weighted_squared_error(&mut tape, y, ex.score, weights)?;
            let lv = tape.value(l).data()[0];
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss on example `{}`", ex.id)));
            }
            loss += lv;
            tape.backward(l, &mut g, scale)?;
        }
        Ok((g, loss))
    });
    let mut total = 0.0;
    for p in parts {
        let (g, l) = p?;
        grads.merge(&g);
        total += l;
    }
    Ok(total)
}

pub fn predict_all<E: Executor>(
    model: &GradingModel,
    store: &ParamStore,
    examples: &[PreparedExample],
    chunk_size: usize,
    exec: &E,
) -> Result<Vec<f64>> {
    let chunks = chunk_ranges(examples.len(), chunk_size);
    let parts = exec.map(chunks.len(), |c| -> Result<Vec<f64>> {
        let (s, e) = chunks[c];
        examples[s..e].iter().map(|ex| model.predict(store, ex)).collect()
    });
    let mut out = Vec::with_capacity(examples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn mean_loss<E: Executor>(
    model: &GradingModel,
    store: &ParamStore,
    examples: &[PreparedExample],
    weights: &LossWeights,
    chunk_size: usize,
    exec: &E,
) -> Result<f64> {
    let preds = predict_all(model, store, examples, chunk_size, exec)?;
    let y: Vec<f64> = examples.iter().map(|e| e.score).collect();
    crate::scorer::weighted_mse(&preds, &y, weights)
}

pub fn loss_weights_of(examples: &[PreparedExample]) -> Result<LossWeights> {
    let scores: Vec<u8> = examples.iter().map(|e| math::round(e.score).clamp(0.0, 255.0) as u8).collect();
    compute_loss_weights(&scores)
}

/// Trains `store` in place for up to `max_epochs` (overridable via `epochs`)
/// and returns the log. The final epoch's parameters are kept.
#[allow(clippy::too_many_arguments)]
pub fn train<E: Executor>(
    model: &GradingModel,
    store: &mut ParamStore,
    train_set: &[PreparedExample],
    val_set: &[PreparedExample],
    config: &TrainConfig,
    run: RunSpec,
    epochs: Option<usize>,
    exec: &E,
) -> Result<TrainLog> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    let weights = match config.loss_weighting {
        LossWeighting::InverseFrequency => loss_weights_of(train_set)?,
        LossWeighting::Uniform => LossWeights::default(),
    };
    let max_epochs = epochs.unwrap_or(config.max_epochs);
    let mut adam = AdamState::new(store, run.initial_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let probe = if val_set.is_empty() { train_set } else { val_set };
    let mut log = TrainLog {
        start_loss: mean_loss(model, store, probe, &weights, config.chunk_size, exec)?,
        ..TrainLog::default()
    };
    let group = config.batch_size * config.grad_accum_steps;
    let dropout = model.config.gat.dropout > 0.0 || model.config.encoder.dropout > 0.0;
    for epoch in 0..max_epochs {
        let lr = config.lr_at(run.initial_lr, epoch);
        adam.lr = lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (step, g_ids) in order.chunks(group).enumerate() {
            let mut grads = Gradients::new();
            let scale = 1.0 / g_ids.len() as f64;
            for (mb, mb_ids) in g_ids.chunks(config.batch_size).enumerate() {
                let exs: Vec<&PreparedExample> = mb_ids.iter().map(|&i| &train_set[i]).collect();
                let dseed = dropout.then_some(run.seed ^ ((epoch as u64) << 40) ^ ((step as u64) << 20) ^ mb as u64);
                let l = accumulate_gradients(model, store, &exs, &weights, scale, config.chunk_size, dseed, exec, &mut grads)
                    .map_err(|e| abort(epoch, step, mb, &exs, e))?;
                loss_sum += l;
            }
            if !grads.is_finite() {
                let exs: Vec<&PreparedExample> = g_ids.iter().map(|&i| &train_set[i]).collect();
                return Err(abort(epoch, step, 0, &exs, Error::Numeric("non-finite gradient".into())));
            }
            adam_step(store, &grads, &mut adam)?;
            steps += 1;
        }
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(mean_loss(model, store, val_set, &weights, config.chunk_size, exec)?)
        };
        log.epochs.push(EpochLog { epoch, lr, steps, train_loss: loss_sum / train_set.len() as f64, val_loss });
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite validation loss after epoch {}", epoch + 1)));
            }
            if stopper.observe(v) {
                log.stopped_early = epoch + 1 < max_epochs;
                break;
            }
        }
    }
    Ok(log)
}

fn abort(epoch: usize, step: usize, micro: usize, exs: &[&PreparedExample], err: Error) -> Error {
    let ids: Vec<&str> = exs.iter().map(|e| e.id.as_str()).collect();
    let detail = format!("epoch {} batch {} micro-batch {} (examples {:?}): {}", epoch + 1, step, micro, ids, err);
    log::error!("training aborted: {}", detail);
    match err {
        Error::Numeric(_) => Error::Numeric(detail),
        _ => Error::Contract(detail),
    }
}

/// Output of [`two_stage_train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GradingModel,
    pub store: ParamStore,
    pub log: TrainLog,
    pub stage1_log: Option<TrainLog>,
}

/// Builds a model for `train_set` and trains it. With a stage-1 corpus, a
/// sequence-only model is first trained on it for `stage1_epochs`; its
/// encoder parameters seed the main model, whose other parameters start fresh.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_train<E: Executor>(
    model_config: &ModelConfig,
    config: &TrainConfig,
    stage1: Option<&[Conversation]>,
    train_set: &[Conversation],
    dev_set: &[Conversation],
    words: Option<&WordVecTable>,
    run: RunSpec,
    exec: &E,
) -> Result<Trained> {
    config.validate()?;
    if stage1.is_some_and(<[Conversation]>::is_empty) {
        return Err(Error::Config("stage-1 corpus is empty".into()));
    }
    let mut vocab_src: Vec<Conversation> = train_set.to_vec();
    if let Some(s) = stage1 {
        vocab_src.extend_from_slice(s);
    }
    let vocab = Vocab::build(&vocab_src, config.vocab_min_count);
    let mut store = ParamStore::new();
    let model = GradingModel::new(model_config, vocab.clone(), words.cloned(), &mut store, run.seed)?;
    let train_ex = model.prepare_all(train_set)?;
    let dev_ex = model.prepare_all(dev_set)?;
    let stage1_log = match stage1 {
        Some(s1) => {
            let cfg = model_config.with_variant("B");
            let mut s1_store = ParamStore::new();
            let s1_model = GradingModel::new(&cfg, vocab, words.cloned(), &mut s1_store, run.seed)?;
            let s1_ex = s1_model.prepare_all(s1)?;
            s1_model.regressor.set_output_bias(&mut s1_store, mean_score(&s1_ex));
            let log = train(&s1_model, &mut s1_store, &s1_ex, &[], config, run, Some(config.stage1_epochs), exec)?;
            store.copy_prefix_from(&s1_store, "encoder.")?;
            Some(log)
        }
        None => None,
    };
    model.regressor.set_output_bias(&mut store, mean_score(&train_ex));
    let log = train(&model, &mut store, &train_ex, &dev_ex, config, run, None, exec)?;
    Ok(Trained { model, store, log, stage1_log })
}

fn mean_score(ex: &[PreparedExample]) -> f64 {
    if ex.is_empty() {
        return 5.0;
    }
    ex.iter().map(|e| e.score).sum::<f64>() / ex.len() as f64
}

/// Linearly maps a score from `[lo, hi]` onto 1..=9, rounded.
pub fn rescale_score(score: f64, lo: f64, hi: f64) -> Result<u8> {
    if !(hi > lo) || !score.is_finite() {
        return Err(Error::Config(format!("cannot rescale {} from [{}, {}]", score, lo, hi)));
    }
    let v = 1.0 + 8.0 * (score - lo) / (hi - lo);
    Ok(math::round(v).clamp(1.0, 9.0) as u8)
}

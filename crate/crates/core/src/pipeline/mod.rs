//! Training orchestration, evaluation, multi-seed aggregation and ablation.

mod metrics;
mod train;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{CefrMap, Conversation};
use crate::graph::WordVecTable;
use crate::model::{GradingModel, ModelConfig, PreparedExample};
use crate::scorer::Inventory;
use crate::tensor::ParamStore;
use crate::{Error, Result};

pub use metrics::{
    compute_metrics, confusion, format_cell, macro_margin_accuracy, margin_accuracy, mean_std, pearson, rmse,
    Aggregate, Confusion, MetricsReport, METRIC_NAMES,
};
pub use train::{
    accumulate_gradients, loss_weights_of, predict_all, rescale_score, train, two_stage_train, EarlyStopping,
    EpochLog, LossWeighting, RunSpec, TrainConfig, TrainLog, Trained,
};

/// Runs independent indexed jobs and returns their results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Predictions clamped to the score range, in input order.
    pub predictions: Vec<f64>,
}

/// Predicts every example, clamps to `[1, 9]` and scores against the references.
pub fn evaluate<E: Executor>(
    model: &GradingModel,
    store: &ParamStore,
    examples: &[PreparedExample],
    cefr: &CefrMap,
    exec: &E,
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::Contract("empty test set".into()));
    }
    let raw = predict_all(model, store, examples, 8, exec)?;
    let predictions: Vec<f64> = raw.iter().map(|p| p.clamp(1.0, 9.0)).collect();
    let target: Vec<f64> = examples.iter().map(|e| e.score).collect();
    let report = compute_metrics(&predictions, &target, cefr)?;
    Ok(Evaluation { report, predictions })
}

/// Data and resources shared by every run of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub train: &'a [Conversation],
    pub dev: &'a [Conversation],
    pub test: &'a [Conversation],
    pub stage1: Option<&'a [Conversation]>,
    pub words: Option<&'a WordVecTable>,
    pub cefr: &'a CefrMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub initial_lr: f64,
    pub epochs: usize,
    pub stopped_early: bool,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: String,
    pub runs: Vec<RunRecord>,
    /// Over the successful runs; `None` when every run failed.
    pub aggregate: Option<Aggregate>,
}

impl VariantReport {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    /// One row per run plus the aggregate row.
    pub fn render(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.runs {
            let label = format!("seed {} lr {:.0e}", r.seed, r.initial_lr);
            match (&r.metrics, &r.error) {
                (Some(m), _) => rows.push((label, m.values().map(|v| format!("{:.3}", v)).to_vec())),
                (None, Some(e)) => rows.push((label, alloc::vec![format!("failed: {}", e)])),
                (None, None) => {}
            }
        }
        if let Some(a) = &self.aggregate {
            rows.push((format!("{} mean (std)", self.variant), a.cells().to_vec()));
        }
        render_table("run", &rows)
    }
}

fn render_table(first: &str, rows: &[(String, Vec<String>)]) -> String {
    let mut widths = [0usize; 7];
    widths[0] = rows.iter().map(|r| r.0.len()).chain([first.len()]).max().unwrap_or(0);
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        widths[k + 1] = rows
            .iter()
            .filter_map(|r| r.1.get(k).filter(|_| r.1.len() == 6).map(String::len))
            .chain([name.len()])
            .max()
            .unwrap_or(0);
    }
    let mut out = format!("{:<w$}", first, w = widths[0]);
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        let _ = write!(out, "  {:>w$}", name, w = widths[k + 1]);
    }
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{:<w$}", label, w = widths[0]);
        if cells.len() == 6 {
            for (k, c) in cells.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", c, w = widths[k + 1]);
            }
        } else {
            for c in cells {
                let _ = write!(out, "  {}", c);
            }
        }
        out.push('\n');
    }
    out
}

/// Trains and evaluates one model per repeat and aggregates the test metrics.
/// Failed runs are recorded and excluded from the aggregate.
pub fn multi_seed_run<E: Executor>(
    model_config: &ModelConfig,
    config: &TrainConfig,
    exp: &Experiment<'_>,
    exec: &E,
) -> Result<VariantReport> {
    config.validate()?;
    model_config.inventory()?;
    let runs = exec.map(config.repeats, |r| {
        let spec = config.run(r);
        let outcome = two_stage_train(model_config, config, exp.stage1, exp.train, exp.dev, exp.words, spec, exec)
            .and_then(|t| {
                let test = t.model.prepare_all(exp.test)?;
                let ev = evaluate(&t.model, &t.store, &test, exp.cefr, exec)?;
                Ok((t.log, ev.report))
            });
        match outcome {
            Ok((log, m)) => RunRecord {
                seed: spec.seed,
                initial_lr: spec.initial_lr,
                epochs: log.epochs.len(),
                stopped_early: log.stopped_early,
                metrics: Some(m),
                error: None,
            },
            Err(e) => {
                log::error!("run seed {} lr {} failed: {}", spec.seed, spec.initial_lr, e);
                RunRecord {
                    seed: spec.seed,
                    initial_lr: spec.initial_lr,
                    epochs: 0,
                    stopped_early: false,
                    metrics: None,
                    error: Some(e.to_string()),
                }
            }
        }
    });
    let ok: Vec<&MetricsReport> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let aggregate = if ok.is_empty() { None } else { Some(Aggregate::of(&ok)?) };
    Ok(VariantReport { variant: model_config.variant.clone(), runs, aggregate })
}

/// The sequence-only baseline followed by the standard ablation variants.
pub const ABLATION_VARIANTS: [&str; 9] = ["B", "B+C", "B+D", "B+CD", "B+CDA", "C", "D", "C+D", "C+D+A"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<VariantReport>,
}

impl AblationReport {
    /// Variants as rows, the six metrics as `mean (std)` columns.
    pub fn to_table(&self) -> String {
        let rows: Vec<(String, Vec<String>)> = self
            .rows
            .iter()
            .map(|v| {
                let cells = match &v.aggregate {
                    Some(a) => a.cells().to_vec(),
                    None => alloc::vec![String::from("all runs failed")],
                };
                (v.variant.clone(), cells)
            })
            .collect();
        render_table("variant", &rows)
    }

    pub fn failed_runs(&self) -> usize {
        self.rows.iter().map(VariantReport::failed_runs).sum()
    }
}

/// Normalizes subset names to canonical variant labels, baseline first.
pub fn ablation_variants(subsets: &[String]) -> Result<Vec<String>> {
    let base = Inventory::parse("B")?.label();
    let mut out = alloc::vec![base];
    for s in subsets {
        let label = Inventory::parse(s)?.label();
        if !out.contains(&label) {
            out.push(label);
        }
    }
    Ok(out)
}

/// One [`multi_seed_run`] per subset, always including the sequence-only baseline.
pub fn ablate<E: Executor>(
    model_config: &ModelConfig,
    config: &TrainConfig,
    exp: &Experiment<'_>,
    subsets: &[String],
    exec: &E,
) -> Result<AblationReport> {
    let variants = ablation_variants(subsets)?;
    let mut rows = Vec::with_capacity(variants.len());
    for v in &variants {
        rows.push(multi_seed_run(&model_config.with_variant(v), config, exp, exec)?);
    }
    Ok(AblationReport { rows })
}

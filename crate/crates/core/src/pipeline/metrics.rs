//! Regression metrics, CEFR confusion matrices and multi-run aggregation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::CefrMap;
use crate::math;
use crate::{Error, Result};

/// Confusion counts over CEFR groups: rows are true groups, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Confusion { labels, counts: vec![vec![0; n]; n] }
    }

    /// Adds another matrix over the same labels.
    pub fn merge(&mut self, other: &Confusion) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::Contract("confusion matrices have different labels".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Row-normalized percents. Empty rows stay all zero.
    pub fn percents(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    /// CSV with a header row of predicted labels; each row starts with the true
    /// label. Four decimals keep every non-empty row within 0.001 of 100.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(self.percents()) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{:.4}", v);
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width plain-text rendering of the percent matrix.
    pub fn to_text(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(7);
        let mut out = format!("{:>w$}", "true/pred", w = width.max(9));
        for l in &self.labels {
            let _ = write!(out, " {:>w$}", l, w = width);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(self.percents()) {
            let _ = write!(out, "{:>w$}", l, w = width.max(9));
            for v in row {
                let _ = write!(out, " {:>w$.2}", v, w = width);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub rmse: f64,
    pub pcc: f64,
    /// Set when either vector is constant; `pcc` is then reported as 0.
    pub pcc_undefined: bool,
    pub acc_05: f64,
    pub acc_10: f64,
    pub macro_acc_05: f64,
    pub macro_acc_10: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    /// The six table metrics in column order.
    pub fn values(&self) -> [f64; 6] {
        [self.rmse, self.pcc, self.acc_05, self.acc_10, self.macro_acc_05, self.macro_acc_10]
    }
}

pub const METRIC_NAMES: [&str; 6] = ["RMSE", "PCC", "Acc@0.5", "Acc@1.0", "mAcc@0.5", "mAcc@1.0"];

pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    math::sqrt(s / pred.len() as f64)
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Percent of predictions within `margin` of the target.
pub fn margin_accuracy(pred: &[f64], target: &[f64], margin: f64) -> f64 {
    let hits = pred.iter().zip(target).filter(|(p, t)| (*p - *t).abs() <= margin + 1e-12).count();
    100.0 * hits as f64 / pred.len() as f64
}

fn score_of(v: f64) -> u8 {
    math::round(v).clamp(1.0, 9.0) as u8
}

/// Mean over CEFR groups (by target) of the within-group margin accuracy.
pub fn macro_margin_accuracy(pred: &[f64], target: &[f64], margin: f64, cefr: &CefrMap) -> f64 {
    let n_groups = cefr.labels().len();
    let mut hits = vec![0usize; n_groups];
    let mut totals = vec![0usize; n_groups];
    for (p, t) in pred.iter().zip(target) {
        let g = cefr.group_index(score_of(*t));
        totals[g] += 1;
        if (p - t).abs() <= margin + 1e-12 {
            hits[g] += 1;
        }
    }
    let accs: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| 100.0 * h as f64 / t as f64)
        .collect();
    accs.iter().sum::<f64>() / accs.len() as f64
}

pub fn confusion(pred: &[f64], target: &[f64], cefr: &CefrMap) -> Confusion {
    let mut c = Confusion::new(cefr.labels().into_iter().map(ToString::to_string).collect());
    for (p, t) in pred.iter().zip(target) {
        c.counts[cefr.group_index(score_of(*t))][cefr.group_index(score_of(*p))] += 1;
    }
    c
}

pub fn compute_metrics(pred: &[f64], target: &[f64], cefr: &CefrMap) -> Result<MetricsReport> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "metrics need matching non-empty vectors, got {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite prediction or target".into()));
    }
    let pcc = pearson(pred, target);
    if pcc.is_none() {
        log::warn!("PCC undefined for constant predictions or targets, reporting 0");
    }
    Ok(MetricsReport {
        n: pred.len(),
        rmse: rmse(pred, target),
        pcc: pcc.unwrap_or(0.0),
        pcc_undefined: pcc.is_none(),
        acc_05: margin_accuracy(pred, target, 0.5),
        acc_10: margin_accuracy(pred, target, 1.0),
        macro_acc_05: macro_margin_accuracy(pred, target, 0.5, cefr),
        macro_acc_10: macro_margin_accuracy(pred, target, 1.0, cefr),
        confusion: confusion(pred, target, cefr),
    })
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

/// A `mean (std)` table cell with three decimals.
pub fn format_cell(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{:.3} ({:.3})", m, s)
}

/// Per-metric mean and sample standard deviation over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: [f64; 6],
    pub std: [f64; 6],
    /// Pooled counts over all runs.
    pub confusion: Confusion,
}

impl Aggregate {
    pub fn of(reports: &[&MetricsReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::Contract("nothing to aggregate".into()))?;
        let mut confusion = first.confusion.clone();
        for r in &reports[1..] {
            confusion.merge(&r.confusion)?;
        }
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for k in 0..6 {
            let col: Vec<f64> = reports.iter().map(|r| r.values()[k]).collect();
            (mean[k], std[k]) = mean_std(&col);
        }
        Ok(Aggregate { runs: reports.len(), mean, std, confusion })
    }

    pub fn cells(&self) -> [String; 6] {
        core::array::from_fn(|k| format!("{:.3} ({:.3})", self.mean[k], self.std[k]))
    }
}

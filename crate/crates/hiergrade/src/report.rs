//! JSON and text reports.

use std::fs;
use std::path::Path;

use hiergrade_core::pipeline::{AblationReport, Confusion};
use serde::Serialize;

use crate::{io_err, Error, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_ablation(path: &Path) -> Result<AblationReport> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Pooled confusion over every successful run of `variant`.
pub fn variant_confusion<'a>(report: &'a AblationReport, variant: &str) -> Option<&'a Confusion> {
    report.rows.iter().find(|r| r.variant == variant)?.aggregate.as_ref().map(|a| &a.confusion)
}

/// Writes the row-normalized matrix as CSV and a text rendering next to it.
pub fn write_confusion(csv_path: &Path, confusion: &Confusion) -> Result<()> {
    fs::write(csv_path, confusion.to_csv()).map_err(io_err(csv_path))?;
    let txt = csv_path.with_extension("txt");
    fs::write(&txt, confusion.to_text()).map_err(io_err(&txt))
}

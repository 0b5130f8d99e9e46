//! Report, history and sweep files.

use std::fs;
use std::path::{Path, PathBuf};

use solstep_core::harness::{ConfusionMatrix, EvalReport, SweepTable};
use solstep_core::ingest::Activity;
use solstep_core::model::EpochStats;

use crate::error::{io_err, Result};
use crate::io::write_json;

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Rows of `protocol,split,accuracy`, closed by a `mean` row.
pub fn summary_csv(report: &EvalReport) -> Vec<String> {
    let mut lines = vec!["protocol,split,accuracy".to_string()];
    for s in &report.splits {
        lines.push(format!("{},{},{}", report.protocol, s.name, s.accuracy));
    }
    lines.push(format!("{},mean,{}", report.protocol, report.mean_accuracy));
    lines
}

/// Truth in rows, prediction in columns, both labelled by class name.
pub fn confusion_csv(confusion: &ConfusionMatrix, classes: &[Activity]) -> Vec<String> {
    let names: Vec<&str> = classes.iter().map(|c| c.name()).collect();
    let mut lines = vec![format!("truth\\predicted,{}", names.join(","))];
    for (name, row) in names.iter().zip(&confusion.counts) {
        let counts: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        lines.push(format!("{name},{}", counts.join(",")));
    }
    lines
}

/// Writes `report.json`, `summary.csv` and one `confusion_<split>.csv` per
/// split plus the pooled `confusion_all.csv`. Returns the paths written.
pub fn write_eval_report(dir: &Path, report: &EvalReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    write_json(&path, report)?;
    written.push(path);
    let path = dir.join("summary.csv");
    write_lines(&path, &summary_csv(report))?;
    written.push(path);
    for s in &report.splits {
        let path = dir.join(format!("confusion_{}.csv", file_safe(&s.name)));
        write_lines(&path, &confusion_csv(&s.confusion, &report.classes))?;
        written.push(path);
    }
    let path = dir.join("confusion_all.csv");
    write_lines(&path, &confusion_csv(&report.pooled_confusion(), &report.classes))?;
    written.push(path);
    Ok(written)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

pub fn sweep_csv(table: &SweepTable) -> Vec<String> {
    let mut lines = vec![format!("{},mean_accuracy,window_count", table.axis)];
    for r in &table.rows {
        lines.push(format!("{},{},{}", r.value, r.mean_accuracy, r.window_count));
    }
    lines
}

/// Writes `sweep.csv` and the full `sweep.json`.
pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join("sweep.csv");
    write_lines(&csv, &sweep_csv(table))?;
    let json = dir.join("sweep.json");
    write_json(&json, table)?;
    Ok(vec![csv, json])
}

pub fn history_csv(history: &[EpochStats]) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut lines = vec!["epoch,train_loss,train_accuracy,val_loss,val_accuracy".to_string()];
    for e in history {
        lines.push(format!(
            "{},{},{},{},{}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            opt(e.val_loss),
            opt(e.val_accuracy)
        ));
    }
    lines
}

pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    write_lines(path, &history_csv(history))
}

//! Evaluation rows, their CSV schema, and the merged comparison report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const EVAL_COLUMNS: [&str; 9] = [
    "model",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
    "lpips_mean",
    "lpips_std",
    "params",
    "accuracy",
];

/// One model's summary over its sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub lpips_mean: f64,
    pub lpips_std: f64,
    pub params: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Higher,
    Lower,
}

/// Metrics that receive a best marker, with the direction that wins.
pub const RANKED: [(&str, Direction); 5] = [
    ("psnr_mean", Direction::Higher),
    ("ssim_mean", Direction::Higher),
    ("lpips_mean", Direction::Lower),
    ("params", Direction::Lower),
    ("accuracy", Direction::Higher),
];

impl EvalRow {
    fn ranked_value(&self, metric: &str) -> f64 {
        match metric {
            "psnr_mean" => self.psnr_mean,
            "ssim_mean" => self.ssim_mean,
            "lpips_mean" => self.lpips_mean,
            "params" => self.params as f64,
            "accuracy" => self.accuracy,
            other => unreachable!("unranked metric {other}"),
        }
    }
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an eval CSV, rejecting any header other than [`EVAL_COLUMNS`].
pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != EVAL_COLUMNS {
        bail!(
            "{} has columns [{}], expected [{}]",
            path.display(),
            header.join(","),
            EVAL_COLUMNS.join(",")
        );
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{} row {}", path.display(), i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<EvalRow>,
    /// For each row, the ranked metrics on which it is best (ties all win).
    pub best: Vec<Vec<&'static str>>,
}

pub fn build_report(rows: Vec<EvalRow>) -> Report {
    let mut best = vec![Vec::new(); rows.len()];
    for (metric, dir) in RANKED {
        let values = rows.iter().map(|r| r.ranked_value(metric));
        let target = match dir {
            Direction::Higher => values.fold(f64::NEG_INFINITY, f64::max),
            Direction::Lower => values.fold(f64::INFINITY, f64::min),
        };
        for (i, row) in rows.iter().enumerate() {
            if row.ranked_value(metric) == target {
                best[i].push(metric);
            }
        }
    }
    Report { rows, best }
}

/// Merges eval CSVs in the given order.
pub fn merge_eval_csvs(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        bail!("no evaluation CSVs to report on");
    }
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_eval_csv(p)?);
    }
    Ok(build_report(rows))
}

impl Report {
    /// Merged rows plus a `best` column listing the metrics each row wins.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut header: Vec<&str> = EVAL_COLUMNS.to_vec();
        header.push("best");
        w.write_record(&header)?;
        for (row, best) in self.rows.iter().zip(&self.best) {
            w.write_record([
                row.model.clone(),
                row.psnr_mean.to_string(),
                row.psnr_std.to_string(),
                row.ssim_mean.to_string(),
                row.ssim_std.to_string(),
                row.lpips_mean.to_string(),
                row.lpips_std.to_string(),
                row.params.to_string(),
                row.accuracy.to_string(),
                best.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Side-by-side text table; `*` marks the best value of each ranked metric.
    pub fn render(&self) -> String {
        let mark = |i: usize, metric: &str| if self.best[i].contains(&metric) { "*" } else { " " };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>18} {:>18} {:>22} {:>9} {:>9}",
            "model", "PSNR (dB) ↑", "SSIM ↑", "LPIPS-proxy ↓", "params ↓", "acc ↑"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<12} {:>8.4} ± {:<6.4}{} {:>8.4} ± {:<6.4}{} {:>12.4} ± {:<6.4}{} {:>8}{} {:>8.4}{}",
                r.model,
                r.psnr_mean,
                r.psnr_std,
                mark(i, "psnr_mean"),
                r.ssim_mean,
                r.ssim_std,
                mark(i, "ssim_mean"),
                r.lpips_mean,
                r.lpips_std,
                mark(i, "lpips_mean"),
                r.params,
                mark(i, "params"),
                r.accuracy,
                mark(i, "accuracy"),
            );
        }
        out.push_str("references: class-matched nearest test images (minimum MSE); LPIPS-proxy uses the proxy classifier's hidden activations\n");
        out
    }
}

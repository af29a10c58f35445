//! Thresholded evaluation, confusion-matrix metrics and run comparison.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TempNet;
use crate::ops::loss::bce;
use crate::params::ParamStore;
use crate::parallel;
use crate::pipeline::Sample;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Ratios derived from confusion counts. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metric_math(tp: u64, tn: u64, fp: u64, fn_: u64) -> Metrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub id: String,
    pub label: bool,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub n: u64,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub metrics: Metrics,
    pub bce: f64,
    /// Sorted by id.
    pub records: Vec<ClipRecord>,
}

impl EvalReport {
    /// Builds the report from per-clip probabilities; `p >= threshold` counts
    /// as a positive prediction.
    pub fn from_records(mut records: Vec<ClipRecord>, threshold: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySplit("evaluation".into()));
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        let mut loss = 0.0;
        for r in &records {
            match (r.probability >= threshold, r.label) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
            loss += bce(r.probability, if r.label { 1.0 } else { 0.0 });
        }
        let n = records.len() as u64;
        Ok(EvalReport {
            threshold,
            n,
            tp,
            tn,
            fp,
            fn_,
            metrics: metric_math(tp, tn, fp, fn_),
            bce: loss / n as f64,
            records,
        })
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |v| format!("{v:.6}"));
        let m = &self.metrics;
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "threshold = {}", self.threshold);
        let _ = writeln!(out, "accuracy = {}", opt(m.accuracy));
        let _ = writeln!(out, "precision = {}", opt(m.precision));
        let _ = writeln!(out, "recall = {}", opt(m.recall));
        let _ = writeln!(out, "f1 = {}", opt(m.f1));
        let _ = writeln!(out, "bce = {:.6}", self.bce);
        let _ = writeln!(out, "fn = {}", self.fn_);
        let _ = writeln!(out, "fp = {}", self.fp);
        let _ = writeln!(out, "tp = {}", self.tp);
        let _ = writeln!(out, "tn = {}", self.tn);
        out.push_str("# id\tlabel\tprobability\n");
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{:.9}", r.id, r.label as u8, r.probability);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Probability for every sample, in input order.
pub fn predict_all(net: &TempNet, params: &ParamStore<f32>, samples: &[Sample], threads: usize) -> Result<Vec<f64>> {
    parallel::map(samples, threads, |s| net.predict(params, &s.input).map(|(p, _)| p))
        .into_iter()
        .collect()
}

pub fn evaluate(net: &TempNet, params: &ParamStore<f32>, samples: &[Sample], threshold: f64, threads: usize) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptySplit("evaluation".into()));
    }
    let probs = predict_all(net, params, samples, threads)?;
    let records = samples
        .iter()
        .zip(probs)
        .map(|(s, probability)| ClipRecord {
            id: s.id.clone(),
            label: s.label,
            probability,
        })
        .collect();
    EvalReport::from_records(records, threshold)
}

/// Column of the comparison table and whether larger is better.
pub const COLUMNS: [(&str, bool); 6] = [
    ("accuracy", true),
    ("precision", true),
    ("bce", false),
    ("fn", false),
    ("fp", false),
    ("f1", true),
];

fn column_value(r: &EvalReport, col: usize) -> Option<f64> {
    match col {
        0 => r.metrics.accuracy,
        1 => r.metrics.precision,
        2 => Some(r.bce),
        3 => Some(r.fn_ as f64),
        4 => Some(r.fp as f64),
        _ => r.metrics.f1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub names: Vec<String>,
    pub values: Vec<[Option<f64>; 6]>,
    /// `best[row][col]` is set for every entry equal to the column's best.
    pub best: Vec<[bool; 6]>,
}

pub fn compare_runs(runs: &[(String, EvalReport)]) -> Comparison {
    let values: Vec<[Option<f64>; 6]> = runs.iter().map(|(_, r)| std::array::from_fn(|c| column_value(r, c))).collect();
    let mut best = vec![[false; 6]; runs.len()];
    for (c, &(_, higher)) in COLUMNS.iter().enumerate() {
        let winner = values.iter().filter_map(|v| v[c]).reduce(|a, b| if (b > a) == higher && b != a { b } else { a });
        for (row, v) in values.iter().enumerate() {
            best[row][c] = winner.is_some() && v[c] == winner;
        }
    }
    Comparison {
        names: runs.iter().map(|(n, _)| n.clone()).collect(),
        values,
        best,
    }
}

impl Comparison {
    /// Fixed-width table; best entries carry a trailing `*`.
    pub fn render(&self) -> String {
        let name_width = self.names.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:name_width$}", "method");
        for (name, _) in COLUMNS {
            let _ = write!(out, "  {name:>10}");
        }
        out.push('\n');
        for ((name, vals), best) in self.names.iter().zip(&self.values).zip(&self.best) {
            let _ = write!(out, "{name:name_width$}");
            for (c, v) in vals.iter().enumerate() {
                let cell = match v {
                    None => "-".to_string(),
                    Some(v) if c == 3 || c == 4 => format!("{v:.0}"),
                    Some(v) => format!("{v:.4}"),
                };
                let mark = if best[c] { "*" } else { " " };
                let _ = write!(out, "  {cell:>9}{mark}");
            }
            out.push('\n');
        }
        out
    }
}

//! Parameter and FLOP accounting.
//!
//! FLOPs are `2 x multiply-accumulates` for convolutions (every kernel tap,
//! padded or not) and dense layers, plus one per comparison in max pooling
//! and in the attention max path. Bias additions, ReLU, sigmoid, mean
//! reductions and the gating product are not counted.

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{Stage, TempNetConfig, KERNEL};
use crate::ops::pool::comparisons;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRow {
    pub name: String,
    pub detail: String,
    pub output: [usize; 4],
    pub params: u64,
    pub flops: u64,
}

fn conv_params(cin: usize, cout: usize) -> u64 {
    (KERNEL.pow(3) * cin * cout + cout) as u64
}

fn conv_flops(shape: [usize; 4], cin: usize, cout: usize) -> u64 {
    2 * (shape[0] * shape[1] * shape[2]) as u64 * (KERNEL.pow(3) * cin * cout) as u64
}

fn dense_params(k: usize, m: usize) -> u64 {
    (k * m + m) as u64
}

fn dense_flops(k: usize, m: usize) -> u64 {
    2 * (k * m) as u64
}

/// One row per stage of the layer schedule.
pub fn describe_rows(cfg: &TempNetConfig) -> Result<Vec<StageRow>> {
    let ch = cfg.channels;
    let mut rows = Vec::new();
    let mut current = [0; 4];
    for stage in cfg.stages()? {
        let row = match stage {
            Stage::Stem { cin, shape } => {
                current = shape;
                StageRow {
                    name: "stem".into(),
                    detail: format!("conv 3x3x3 {cin}->{ch}"),
                    output: shape,
                    params: conv_params(cin, ch),
                    flops: conv_flops(shape, cin, ch),
                }
            }
            Stage::Block { scope, shape } => StageRow {
                name: scope,
                detail: format!("residual 2x conv 3x3x3 {ch}->{ch}"),
                output: shape,
                params: 2 * conv_params(ch, ch),
                flops: 2 * conv_flops(shape, ch, ch),
            },
            Stage::Attention { scope, frames, bottleneck } => {
                let per_frame = (current[1] * current[2] * current[3]) as u64;
                let mlp = dense_flops(frames, bottleneck) + dense_flops(bottleneck, frames);
                StageRow {
                    name: scope,
                    detail: format!("temporal attention {frames}->{bottleneck}->{frames}"),
                    output: current,
                    params: dense_params(frames, bottleneck) + dense_params(bottleneck, frames),
                    flops: frames as u64 * (per_frame - 1) + 2 * mlp,
                }
            }
            Stage::Pool { scope, window, input, shape } => {
                current = shape;
                StageRow {
                    name: scope,
                    detail: format!("maxpool ({},{},{})", window.0, window.1, window.2),
                    output: shape,
                    params: 0,
                    flops: comparisons(&input, window),
                }
            }
            Stage::Head { channels } => StageRow {
                name: "head".into(),
                detail: format!("mean pool, dense {channels}->1, sigmoid"),
                output: [1, 1, 1, 1],
                params: dense_params(channels, 1),
                flops: dense_flops(channels, 1),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn count_params(cfg: &TempNetConfig) -> Result<u64> {
    Ok(describe_rows(cfg)?.iter().map(|r| r.params).sum())
}

pub fn count_flops(cfg: &TempNetConfig) -> Result<u64> {
    Ok(describe_rows(cfg)?.iter().map(|r| r.flops).sum())
}

/// Stage-by-stage table with totals.
pub fn describe(cfg: &TempNetConfig) -> Result<String> {
    let rows = describe_rows(cfg)?;
    let name_width = rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let detail_width = rows.iter().map(|r| r.detail.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:name_width$}  {:detail_width$}  {:>16}  {:>9}  {:>15}",
        "stage", "layers", "output TxHxWxC", "params", "flops"
    );
    for r in &rows {
        let shape = format!("{}x{}x{}x{}", r.output[0], r.output[1], r.output[2], r.output[3]);
        let _ = writeln!(out, "{:name_width$}  {:detail_width$}  {shape:>16}  {:>9}  {:>15}", r.name, r.detail, r.params, r.flops);
    }
    let (params, flops): (u64, u64) = (rows.iter().map(|r| r.params).sum(), rows.iter().map(|r| r.flops).sum());
    let _ = writeln!(out, "{:name_width$}  {:detail_width$}  {:>16}  {params:>9}  {flops:>15}", "total", "", "");
    Ok(out)
}

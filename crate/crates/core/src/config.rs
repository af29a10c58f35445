//! Plain-text `key = value` configuration covering the network, the
//! preprocessing chain and training. Blank lines and `#` comments are
//! ignored; unknown keys are an error.
//!
//! When `input_shape` is absent it is derived from the preprocessing keys:
//! 20 frames, and the resize target (halved, with 4 channels, when the
//! wavelet transform is on).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::TempNetConfig;
use crate::ops::Window;
use crate::preproc::PreprocConfig;
use crate::train::{OptimizerKind, TrainConfig};

pub const DEFAULT_FRAMES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub net: TempNetConfig,
    pub preproc: PreprocConfig,
    pub train: TrainConfig,
    /// Frame rate of stored clips (clip files carry no rate of their own).
    pub source_fps: f64,
}

impl Default for Config {
    fn default() -> Self {
        let preproc = PreprocConfig::default();
        let net = TempNetConfig { input_shape: derived_input_shape(&preproc), ..Default::default() };
        Config {
            net,
            preproc,
            train: TrainConfig::default(),
            source_fps: 5.0,
        }
    }
}

fn derived_input_shape(preproc: &PreprocConfig) -> [usize; 4] {
    let (h, w, c) = preproc.output_hwc();
    [DEFAULT_FRAMES, h, w, c]
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Parses `AxBxC...` (commas also accepted) into exactly `N` extents.
pub fn parse_extents<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let parts: Vec<usize> = v
        .split(['x', 'X', ','])
        .map(|p| parse_num(key, p.trim()))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::InvalidConfig(format!("{key}: expected {N} extents, got {v:?}")))
}

fn window(key: &str, v: &str) -> Result<Window> {
    let [a, b, c] = parse_extents::<3>(key, v)?;
    Ok((a, b, c))
}

fn join(extents: &[usize]) -> String {
    extents.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut input_shape = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            let net = &mut cfg.net;
            let pre = &mut cfg.preproc;
            let tr = &mut cfg.train;
            match key {
                "input_shape" => input_shape = Some(parse_extents::<4>(key, v)?),
                "channels" => net.channels = parse_num(key, v)?,
                "spatial_blocks" => net.spatial_blocks = parse_num(key, v)?,
                "temporal_blocks" => net.temporal_blocks = parse_num(key, v)?,
                "attention" => net.attention = parse_bool(key, v)?,
                "attention_reduction" => net.attention_reduction = parse_num(key, v)?,
                "spatial_pool" => net.spatial_pool = window(key, v)?,
                "temporal_pool" => net.temporal_pool = window(key, v)?,
                "bridge_pool" => net.bridge_pool = window(key, v)?,
                "source_fps" => cfg.source_fps = parse_num(key, v)?,
                "target_fps" => pre.target_fps = parse_num(key, v)?,
                "target_hw_pre_dwt" => pre.target_hw_pre_dwt = parse_extents::<2>(key, v)?.into(),
                "target_hw_no_dwt" => pre.target_hw_no_dwt = parse_extents::<2>(key, v)?.into(),
                "use_wavelet" => pre.use_wavelet = parse_bool(key, v)?,
                "difference_frames" => pre.difference_frames = parse_bool(key, v)?,
                "optimizer" => tr.optimizer = v.parse()?,
                "learning_rate" => tr.learning_rate = parse_num(key, v)?,
                "momentum" => tr.momentum = parse_num(key, v)?,
                "beta1" => tr.beta1 = parse_num(key, v)?,
                "beta2" => tr.beta2 = parse_num(key, v)?,
                "adam_epsilon" => tr.adam_epsilon = parse_num(key, v)?,
                "batch_size" => tr.batch_size = parse_num(key, v)?,
                "epochs" => tr.epochs = parse_num(key, v)?,
                "patience" => tr.patience = parse_num(key, v)?,
                "seed" => tr.seed = parse_num(key, v)?,
                _ => return Err(Error::InvalidConfig(format!("line {}: unknown key {key:?}", n + 1))),
            }
        }
        cfg.net.input_shape = input_shape.unwrap_or_else(|| derived_input_shape(&cfg.preproc));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_fps > 0.0 && self.source_fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("source_fps must be positive, got {}", self.source_fps)));
        }
        self.preproc.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        let (_, _, c) = self.preproc.output_hwc();
        if self.net.input_shape[3] != c {
            return Err(Error::InvalidConfig(format!(
                "input_shape has {} channels but preprocessing produces {c}",
                self.net.input_shape[3]
            )));
        }
        Ok(())
    }

    /// Every key, one per line; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let (net, pre, tr) = (&self.net, &self.preproc, &self.train);
        let w = |w: Window| join(&[w.0, w.1, w.2]);
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("input_shape", join(&net.input_shape));
        line("channels", net.channels.to_string());
        line("spatial_blocks", net.spatial_blocks.to_string());
        line("temporal_blocks", net.temporal_blocks.to_string());
        line("attention", net.attention.to_string());
        line("attention_reduction", net.attention_reduction.to_string());
        line("spatial_pool", w(net.spatial_pool));
        line("temporal_pool", w(net.temporal_pool));
        line("bridge_pool", w(net.bridge_pool));
        line("source_fps", self.source_fps.to_string());
        line("target_fps", pre.target_fps.to_string());
        line("target_hw_pre_dwt", join(&[pre.target_hw_pre_dwt.0, pre.target_hw_pre_dwt.1]));
        line("target_hw_no_dwt", join(&[pre.target_hw_no_dwt.0, pre.target_hw_no_dwt.1]));
        line("use_wavelet", pre.use_wavelet.to_string());
        line("difference_frames", pre.difference_frames.to_string());
        line("optimizer", tr.optimizer.to_string());
        line("learning_rate", tr.learning_rate.to_string());
        line("momentum", tr.momentum.to_string());
        line("beta1", tr.beta1.to_string());
        line("beta2", tr.beta2.to_string());
        line("adam_epsilon", tr.adam_epsilon.to_string());
        line("batch_size", tr.batch_size.to_string());
        line("epochs", tr.epochs.to_string());
        line("patience", tr.patience.to_string());
        line("seed", tr.seed.to_string());
        out
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" | "sgd-momentum" => Ok(OptimizerKind::SgdMomentum),
            _ => Err(Error::InvalidConfig(format!("optimizer: expected adam or sgd-momentum, got {s:?}"))),
        }
    }
}

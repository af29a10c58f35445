//! The TempNet classifier: stem convolution, spatial encoder with temporal
//! attention, a spatio-temporal pooling bridge, temporal encoder and a
//! global-mean-pool head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Fault, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::pool::pooled_extent;
use crate::ops::{ReduceMode, Window};
use crate::params::ParamStore;
use crate::tensor::{Element, Tensor};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TempNetConfig {
    /// `(T, H, W, C)` of one preprocessed clip.
    pub input_shape: [usize; 4],
    pub channels: usize,
    pub spatial_blocks: usize,
    pub temporal_blocks: usize,
    pub attention: bool,
    pub attention_reduction: usize,
    pub spatial_pool: Window,
    pub temporal_pool: Window,
    pub bridge_pool: Window,
}

impl Default for TempNetConfig {
    fn default() -> Self {
        TempNetConfig {
            input_shape: [20, 150, 200, 1],
            channels: 16,
            spatial_blocks: 4,
            temporal_blocks: 4,
            attention: true,
            attention_reduction: 4,
            spatial_pool: (1, 2, 2),
            temporal_pool: (2, 1, 1),
            bridge_pool: (2, 2, 2),
        }
    }
}

/// One step of the layer schedule, with the activation shape it produces.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Stem { cin: usize, shape: [usize; 4] },
    Block { scope: String, shape: [usize; 4] },
    Attention { scope: String, frames: usize, bottleneck: usize },
    Pool { scope: String, window: Window, input: [usize; 4], shape: [usize; 4] },
    Head { channels: usize },
}

impl TempNetConfig {
    pub fn bottleneck(frames: usize, reduction: usize) -> usize {
        (frames / reduction).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.stages().map(|_| ())
    }

    /// The layer schedule with every intermediate shape. Fails if a pooling
    /// window larger than 1 meets an axis that is already down to extent 1.
    pub fn stages(&self) -> Result<Vec<Stage>> {
        let bad = |why: String| Err(Error::InvalidConfig(why));
        if self.input_shape.contains(&0) {
            return bad(format!("input_shape {:?} has a zero extent", self.input_shape));
        }
        if self.channels == 0 {
            return bad("channels must be at least 1".into());
        }
        if self.attention_reduction == 0 {
            return bad("attention_reduction must be at least 1".into());
        }
        for (name, w) in [("spatial_pool", self.spatial_pool), ("temporal_pool", self.temporal_pool), ("bridge_pool", self.bridge_pool)] {
            if w.0 == 0 || w.1 == 0 || w.2 == 0 {
                return bad(format!("{name} extents must be at least 1"));
            }
        }
        let [t, h, w, c] = self.input_shape;
        let ch = self.channels;
        let mut shape = [t, h, w, ch];
        let mut stages = vec![Stage::Stem { cin: c, shape }];
        let pool = |scope: String, window: Window, shape: &mut [usize; 4], stages: &mut Vec<Stage>| -> Result<()> {
            let input = *shape;
            for (axis, (extent, win)) in ["T", "H", "W"].into_iter().zip([(input[0], window.0), (input[1], window.1), (input[2], window.2)]) {
                if extent == 1 && win > 1 {
                    return Err(Error::PoolingCollapse { stage: scope.clone(), axis });
                }
            }
            *shape = [pooled_extent(input[0], window.0), pooled_extent(input[1], window.1), pooled_extent(input[2], window.2), input[3]];
            stages.push(Stage::Pool { scope, window, input, shape: *shape });
            Ok(())
        };
        for i in 1..=self.spatial_blocks {
            let scope = format!("spatial.block{i}");
            stages.push(Stage::Block { scope: scope.clone(), shape });
            if self.attention {
                stages.push(Stage::Attention {
                    scope: format!("{scope}.attention"),
                    frames: shape[0],
                    bottleneck: Self::bottleneck(shape[0], self.attention_reduction),
                });
            }
            pool(format!("{scope}.pool"), self.spatial_pool, &mut shape, &mut stages)?;
        }
        pool("bridge".into(), self.bridge_pool, &mut shape, &mut stages)?;
        for i in 1..=self.temporal_blocks {
            let scope = format!("temporal.block{i}");
            stages.push(Stage::Block { scope: scope.clone(), shape });
            pool(format!("{scope}.pool"), self.temporal_pool, &mut shape, &mut stages)?;
        }
        stages.push(Stage::Head { channels: ch });
        Ok(stages)
    }
}

/// Name and shape of every trainable tensor, in build order.
pub fn param_specs(cfg: &TempNetConfig) -> Result<Vec<(String, Vec<usize>)>> {
    let ch = cfg.channels;
    let mut specs = Vec::new();
    let mut layer = |scope: &str, weight: Vec<usize>, width: usize| {
        let suffix = if weight.len() == 5 { "kernel" } else { "weight" };
        specs.push((format!("{scope}.{suffix}"), weight));
        specs.push((format!("{scope}.bias"), vec![width]));
    };
    let conv = |cin: usize| vec![KERNEL, KERNEL, KERNEL, cin, ch];
    for stage in cfg.stages()? {
        match stage {
            Stage::Stem { cin, .. } => layer("stem", conv(cin), ch),
            Stage::Block { scope, .. } => {
                layer(&format!("{scope}.conv1"), conv(ch), ch);
                layer(&format!("{scope}.conv2"), conv(ch), ch);
            }
            Stage::Attention { scope, frames, bottleneck } => {
                layer(&format!("{scope}.fc1"), vec![frames, bottleneck], bottleneck);
                layer(&format!("{scope}.fc2"), vec![bottleneck, frames], frames);
            }
            Stage::Pool { .. } => {}
            Stage::Head { channels } => layer("head", vec![channels, 1], 1),
        }
    }
    Ok(specs)
}

/// Fan-in-scaled normal weights (`std = sqrt(2 / fan_in)`) and zero biases,
/// drawn in build order from a ChaCha8 stream seeded with `seed`.
pub fn init_params<E: Element>(cfg: &TempNetConfig, seed: u64) -> Result<ParamStore<E>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in param_specs(cfg)? {
        let tensor = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Tensor::from_fn(&shape, |_| E::from_f64_lossy(normal.sample(&mut rng)))
        };
        store.insert(name, tensor)?;
    }
    Ok(store)
}

/// Per-module attention coefficients from one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionTrace {
    pub modules: Vec<(String, Vec<f64>)>,
}

impl AttentionTrace {
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.modules.iter().flat_map(|(_, c)| c.iter().copied())
    }
}

pub struct Forward {
    pub probability: Var,
    pub trace: AttentionTrace,
}

#[derive(Debug, Clone)]
pub struct TempNet {
    cfg: TempNetConfig,
    stages: Vec<Stage>,
}

impl TempNet {
    pub fn new(cfg: TempNetConfig) -> Result<Self> {
        let stages = cfg.stages()?;
        Ok(TempNet { cfg, stages })
    }

    /// Validates `cfg` and draws its initial parameters.
    pub fn build<E: Element>(cfg: TempNetConfig, seed: u64) -> Result<(Self, ParamStore<E>)> {
        let net = Self::new(cfg)?;
        let params = init_params(&net.cfg, seed)?;
        Ok((net, params))
    }

    pub fn config(&self) -> &TempNetConfig {
        &self.cfg
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Records the network on `tape`. Parameters enter as trainable leaves
    /// named as in `params`; the result is a `[1]` probability.
    pub fn forward<E: Element>(&self, tape: &mut Tape<E>, params: &ParamStore<E>, input: &Tensor<E>) -> Result<Forward> {
        if input.shape() != self.cfg.input_shape {
            return Err(Error::shape(
                "tempnet",
                "input",
                format!("{:?}", self.cfg.input_shape),
                format!("{:?}", input.shape()),
            ));
        }
        let p = |tape: &mut Tape<E>, name: String| -> Result<Var> { Ok(tape.param(name.clone(), params.get(&name)?.clone())) };
        let mut trace = AttentionTrace::default();
        let mut x = tape.constant(input.clone());
        for stage in &self.stages {
            match stage {
                Stage::Stem { .. } => {
                    tape.set_scope("stem");
                    let (k, b) = (p(tape, "stem.kernel".into())?, p(tape, "stem.bias".into())?);
                    x = tape.conv3d(x, k, b)?;
                }
                Stage::Block { scope, .. } => {
                    tape.set_scope(scope.as_str());
                    let k1 = p(tape, format!("{scope}.conv1.kernel"))?;
                    let b1 = p(tape, format!("{scope}.conv1.bias"))?;
                    let k2 = p(tape, format!("{scope}.conv2.kernel"))?;
                    let b2 = p(tape, format!("{scope}.conv2.bias"))?;
                    x = residual_block(tape, x, (k1, b1), (k2, b2))?;
                }
                Stage::Attention { scope, .. } => {
                    tape.set_scope(scope.as_str());
                    let mlp = AttentionMlp {
                        w1: p(tape, format!("{scope}.fc1.weight"))?,
                        b1: p(tape, format!("{scope}.fc1.bias"))?,
                        w2: p(tape, format!("{scope}.fc2.weight"))?,
                        b2: p(tape, format!("{scope}.fc2.bias"))?,
                    };
                    let (out, map) = temporal_attention(tape, x, &mlp)?;
                    trace.modules.push((scope.clone(), tape.value(map).data().iter().map(|v| v.as_f64()).collect()));
                    x = out;
                }
                Stage::Pool { scope, window, .. } => {
                    tape.set_scope(scope.as_str());
                    x = tape.maxpool(x, *window)?;
                }
                Stage::Head { .. } => {
                    tape.set_scope("head");
                    let pooled = tape.reduce(x, &[0, 1, 2], ReduceMode::Mean, false)?;
                    let (w, b) = (p(tape, "head.weight".into())?, p(tape, "head.bias".into())?);
                    let logit = tape.dense(pooled, w, b)?;
                    x = tape.sigmoid(logit);
                }
            }
        }
        tape.set_scope("");
        Ok(Forward { probability: x, trace })
    }

    /// Forward pass on a fresh tape, returning the probability and trace.
    pub fn predict<E: Element>(&self, params: &ParamStore<E>, input: &Tensor<E>) -> Result<(f64, AttentionTrace)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, params, input)?;
        Ok((tape.value(out.probability).data()[0].as_f64(), out.trace))
    }

    /// Mean BCE of one clip and its parameter gradients.
    pub fn loss_and_grads<E: Element>(
        &self,
        params: &ParamStore<E>,
        input: &Tensor<E>,
        label: bool,
        fault: Option<Fault>,
    ) -> Result<(f64, f64, crate::autodiff::Gradients<E>)> {
        let mut tape = match fault {
            Some(f) => Tape::with_fault(f),
            None => Tape::new(),
        };
        let out = self.forward(&mut tape, params, input)?;
        let y = tape.constant(Tensor::scalar(if label { E::one() } else { E::zero() }));
        let loss = tape.bce_loss(out.probability, y)?;
        let grads = tape.backward(loss)?;
        let p = tape.value(out.probability).data()[0].as_f64();
        Ok((tape.value(loss).data()[0].as_f64(), p, grads))
    }
}

/// `relu(x + conv2(relu(conv1(x))))`.
pub fn residual_block<E: Element>(tape: &mut Tape<E>, x: Var, conv1: (Var, Var), conv2: (Var, Var)) -> Result<Var> {
    let h = tape.conv3d(x, conv1.0, conv1.1)?;
    let h = tape.relu(h);
    let h = tape.conv3d(h, conv2.0, conv2.1)?;
    let sum = tape.add(x, h)?;
    Ok(tape.relu(sum))
}

pub struct AttentionMlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

fn shared_mlp<E: Element>(tape: &mut Tape<E>, s: Var, mlp: &AttentionMlp) -> Result<Var> {
    let h = tape.dense(s, mlp.w1, mlp.b1)?;
    let h = tape.relu(h);
    tape.dense(h, mlp.w2, mlp.b2)
}

/// `F' = M(F) * F` with `M = sigmoid(mlp(mean_hwc F) + mlp(max_hwc F))`
/// broadcast over `(H, W, C)`. Returns `F'` and the `[T]` map.
pub fn temporal_attention<E: Element>(tape: &mut Tape<E>, f: Var, mlp: &AttentionMlp) -> Result<(Var, Var)> {
    let frames = tape.value(f).shape()[0];
    let width = tape.value(mlp.w1).shape()[0];
    if width != frames {
        return Err(Error::shape("temporal_attention", "T", width, frames));
    }
    let avg = tape.reduce(f, &[1, 2, 3], ReduceMode::Mean, false)?;
    let max = tape.reduce(f, &[1, 2, 3], ReduceMode::Max, false)?;
    let a = shared_mlp(tape, avg, mlp)?;
    let m = shared_mlp(tape, max, mlp)?;
    let logits = tape.add(a, m)?;
    let map = tape.sigmoid(logits);
    let gate = tape.reshape(map, &[frames, 1, 1, 1])?;
    Ok((tape.broadcast_mul(f, gate)?, map))
}

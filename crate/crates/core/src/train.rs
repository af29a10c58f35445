//! Mini-batch training with Adam or SGD with momentum, early stopping on
//! validation BCE and restoration of the best parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::eval::{predict_all, ClipRecord, EvalReport, DEFAULT_THRESHOLD};
use crate::model::TempNet;
use crate::params::ParamStore;
use crate::parallel;
use crate::pipeline::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Velocity decay for SGD with momentum.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-BCE improvement before stopping.
    pub patience: usize,
    /// Seeds both initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 8,
            epochs: 30,
            patience: 10,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(why.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("momentum, beta1 and beta2 must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1");
        }
        Ok(())
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: TrainConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig) -> Self {
        Optimizer {
            cfg: cfg.clone(),
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update from `grads` (already averaged over the batch).
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &Gradients<f32>) -> Result<()> {
        self.step += 1;
        let c = &self.cfg;
        let lr = c.learning_rate;
        let (bias1, bias2) = (1.0 - c.beta1.powi(self.step as i32), 1.0 - c.beta2.powi(self.step as i32));
        for (name, g) in grads.iter() {
            let p = params.get_mut(name)?;
            let m = self.first.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            match c.optimizer {
                OptimizerKind::Adam => {
                    let v = self.second.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
                    for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = g as f64;
                        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                        let update = lr * (*m / bias1) / ((*v / bias2).sqrt() + c.adam_epsilon);
                        *w = (*w as f64 - update) as f32;
                    }
                }
                OptimizerKind::SgdMomentum => {
                    for ((w, &g), m) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                        *m = c.momentum * *m + g as f64;
                        *w = (*w as f64 - lr * *m) as f32;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_bce: f64,
    pub val_bce: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// One line per epoch: `epoch train_bce val_bce val_accuracy`, tab
    /// separated, values in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# epoch\ttrain_bce\tval_bce\tval_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.train_bce, e.val_bce, e.val_accuracy);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut epochs = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format("history", format!("bad line {line:?}"));
            if f.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_bce: num(f[1])?,
                val_bce: num(f[2])?,
                val_accuracy: num(f[3])?,
            });
        }
        Ok(History { epochs })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().min_by(|a, b| a.val_bce.total_cmp(&b.val_bce))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub threads: usize,
    /// Stop once validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            threads: 1,
            target_val_accuracy: None,
        }
    }
}

pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub history: History,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
}

fn check_inputs(net: &TempNet, split: &str, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySplit(split.into()));
    }
    let want = net.config().input_shape;
    for s in samples {
        if s.input.shape() != want {
            return Err(Error::shape("train", format!("{split} clip {}", s.id), format!("{want:?}"), format!("{:?}", s.input.shape())));
        }
    }
    Ok(())
}

/// Mean loss and gradients over `batch`, reduced in batch order.
fn batch_gradients(net: &TempNet, params: &ParamStore<f32>, batch: &[&Sample], threads: usize) -> Result<(f64, Gradients<f32>)> {
    let results = parallel::map(batch, threads, |s| net.loss_and_grads(params, &s.input, s.label, None));
    let mut total = 0.0;
    let mut acc: Option<Gradients<f32>> = None;
    for r in results {
        let (loss, _, g) = r?;
        total += loss;
        match &mut acc {
            Some(a) => a.accumulate(&g),
            None => acc = Some(g),
        }
    }
    let mut grads = acc.expect("non-empty batch");
    grads.scale(1.0 / batch.len() as f32);
    Ok((total, grads))
}

pub fn validation_report(net: &TempNet, params: &ParamStore<f32>, val: &[Sample], threads: usize) -> Result<EvalReport> {
    let probs = predict_all(net, params, val, threads)?;
    let records = val
        .iter()
        .zip(probs)
        .map(|(s, probability)| ClipRecord {
            id: s.id.clone(),
            label: s.label,
            probability,
        })
        .collect();
    EvalReport::from_records(records, DEFAULT_THRESHOLD)
}

/// Trains from `init`. `on_epoch` sees every finished epoch.
pub fn train(
    net: &TempNet,
    init: ParamStore<f32>,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_inputs(net, "train", train)?;
    check_inputs(net, "val", val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut params = init;
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut optimizer = Optimizer::new(cfg);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradients(net, &params, &batch, opts.threads)?;
            train_loss += loss;
            optimizer.step(&mut params, &grads)?;
        }
        let report = validation_report(net, &params, val, opts.threads)?;
        let record = EpochRecord {
            epoch,
            train_bce: train_loss / train.len() as f64,
            val_bce: report.bce,
            val_accuracy: report.metrics.accuracy.unwrap_or(0.0),
        };
        on_epoch(&record);
        if record.val_bce < best.0 {
            best = (record.val_bce, params.clone(), epoch);
        }
        let reached = opts.target_val_accuracy.is_some_and(|t| record.val_accuracy >= t);
        history.epochs.push(record);
        if reached || epoch - best.2 >= cfg.patience {
            break;
        }
    }
    let (_, mut params, best_epoch) = best;
    params.set_metadata("best_epoch", best_epoch.to_string());
    Ok(TrainOutcome { params, history, best_epoch })
}

/// Takes `steps` optimizer steps on a single sample and returns the loss
/// afterwards.
pub fn memorize(net: &TempNet, params: &mut ParamStore<f32>, sample: &Sample, cfg: &TrainConfig, steps: usize) -> Result<f64> {
    let mut optimizer = Optimizer::new(cfg);
    for _ in 0..steps {
        let (_, _, g) = net.loss_and_grads(params, &sample.input, sample.label, None)?;
        optimizer.step(params, &g)?;
    }
    Ok(net.loss_and_grads(params, &sample.input, sample.label, None)?.0)
}

//! Central-difference verification of every parameter gradient of a reduced
//! network in 64-bit precision.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Fault;
use crate::error::Result;
use crate::model::{TempNet, TempNetConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
/// Relative errors use `max(|analytic|, |numeric|, FLOOR)` as denominator so
/// that vanishing gradients are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub scalars: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            let _ = writeln!(
                out,
                "{:44} n={:<5} max_rel_err={:.3e} (index {}: analytic {:.6e}, numeric {:.6e})",
                p.name, p.scalars, p.max_rel_error, p.worst_index, p.analytic, p.numeric
            );
        }
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "max relative error {:.3e}, tolerance {:e}: {verdict}", self.max_rel_error, self.tolerance);
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Small network used for gradient checks: 4x8x8 input, width 2, two
/// spatial blocks and one temporal block.
pub fn reduced_config(attention: bool, wavelet: bool) -> TempNetConfig {
    TempNetConfig {
        input_shape: [4, 8, 8, if wavelet { 4 } else { 1 }],
        channels: 2,
        spatial_blocks: 2,
        temporal_blocks: 1,
        attention,
        attention_reduction: 2,
        ..Default::default()
    }
}

/// Random parameters (biases included, so no pre-activation sits exactly on
/// a ReLU kink) and a random input clip.
pub fn random_problem(cfg: &TempNetConfig, seed: u64) -> Result<(TempNet, ParamStore<f64>, Tensor<f64>)> {
    let (net, mut params) = TempNet::build::<f64>(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let bias = Normal::new(0.0, 0.1).expect("valid std");
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = bias.sample(&mut rng));
        }
    }
    let unit = Normal::new(0.0, 1.0).expect("valid std");
    let input = Tensor::from_fn(&cfg.input_shape, |_| unit.sample(&mut rng));
    Ok((net, params, input))
}

pub fn gradcheck(cfg: &TempNetConfig, tolerance: f64, seed: u64, fault: Option<Fault>) -> Result<GradcheckReport> {
    let (net, mut params, input) = random_problem(cfg, seed)?;
    let label = true;
    let (_, _, analytic) = net.loss_and_grads(&params, &input, label, fault)?;
    let loss = |p: &ParamStore<f64>| -> Result<f64> { Ok(net.loss_and_grads(p, &input, label, None)?.0) };

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut checks = Vec::new();
    for name in names {
        let grad = analytic.get(&name).expect("every parameter has a gradient").clone();
        let mut check = ParamCheck {
            name: name.clone(),
            scalars: grad.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..grad.len() {
            let original = params.get(&name)?.data()[i];
            params.get_mut(&name)?.data_mut()[i] = original + STEP;
            let up = loss(&params)?;
            params.get_mut(&name)?.data_mut()[i] = original - STEP;
            let down = loss(&params)?;
            params.get_mut(&name)?.data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(grad.data()[i], numeric);
            if err > check.max_rel_error || i == 0 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = grad.data()[i];
                check.numeric = numeric;
            }
        }
        checks.push(check);
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tolerance,
        max_rel_error,
        passed: max_rel_error < tolerance,
        params: checks,
    })
}

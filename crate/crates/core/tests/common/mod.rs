//! Brute-force reference implementations shared by the integration tests and
//! the acceptance suite.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempnet::gradcheck::{random_problem, reduced_config};
use tempnet::ops::reduce::ReduceMode;
use tempnet::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// `|a - b| / max(|b|, 1)`, maximised over elements.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Same-padded stride-1 convolution as seven nested loops.
pub fn conv3d(input: &Tensor<f64>, kernel: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
    let s = input.shape();
    let k = kernel.shape();
    let (t, h, w, cin) = (s[0], s[1], s[2], s[3]);
    let (kt, kh, kw, cout) = (k[0], k[1], k[2], k[4]);
    Tensor::from_fn(&[t, h, w, cout], |o| {
        let mut acc = bias.get(&[o[3]]);
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let it = o[0] as isize + dt as isize - (kt / 2) as isize;
                    let ih = o[1] as isize + dh as isize - (kh / 2) as isize;
                    let iw = o[2] as isize + dw as isize - (kw / 2) as isize;
                    if it < 0 || ih < 0 || iw < 0 || it >= t as isize || ih >= h as isize || iw >= w as isize {
                        continue;
                    }
                    for ci in 0..cin {
                        acc += input.get(&[it as usize, ih as usize, iw as usize, ci]) * kernel.get(&[dt, dh, dw, ci, o[3]]);
                    }
                }
            }
        }
        acc
    })
}

/// Ceil-mode max pool; returns values and winning linear input indices.
pub fn maxpool(input: &Tensor<f64>, window: (usize, usize, usize)) -> (Tensor<f64>, Vec<u32>) {
    let s = input.shape();
    let out_shape = [
        s[0].div_ceil(window.0),
        s[1].div_ceil(window.1),
        s[2].div_ceil(window.2),
        s[3],
    ];
    let mut arg = Vec::new();
    let out = Tensor::from_fn(&out_shape, |o| {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = usize::MAX;
        for t in o[0] * window.0..((o[0] + 1) * window.0).min(s[0]) {
            for h in o[1] * window.1..((o[1] + 1) * window.1).min(s[1]) {
                for w in o[2] * window.2..((o[2] + 1) * window.2).min(s[2]) {
                    let i = input.offset(&[t, h, w, o[3]]);
                    let v = input.data()[i];
                    if best_i == usize::MAX || v > best || (v == best && i < best_i) {
                        best = v;
                        best_i = i;
                    }
                }
            }
        }
        arg.push(best_i as u32);
        best
    });
    (out, arg)
}

pub fn dense(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
    let (k, m) = (weight.shape()[0], weight.shape()[1]);
    let rows = input.len() / k;
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = m;
    let mut out = Vec::with_capacity(rows * m);
    for r in 0..rows {
        for j in 0..m {
            let mut acc = bias.data()[j];
            for i in 0..k {
                acc += input.data()[r * k + i] * weight.data()[i * m + j];
            }
            out.push(acc);
        }
    }
    Tensor::new(shape, out).unwrap()
}

/// Reduction by enumerating every input index and grouping on the kept axes.
pub fn reduce(input: &Tensor<f64>, axes: &[usize], mode: ReduceMode, keep_dims: bool) -> Tensor<f64> {
    let s = input.shape();
    let kept: Vec<usize> = (0..s.len()).filter(|a| !axes.contains(a)).collect();
    let mut out_shape: Vec<usize> = if keep_dims {
        (0..s.len()).map(|a| if axes.contains(&a) { 1 } else { s[a] }).collect()
    } else {
        kept.iter().map(|&a| s[a]).collect()
    };
    // a full reduction yields a one-element vector, not a rank-0 tensor
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    Tensor::from_fn(&out_shape, |o| {
        let mut vals = Vec::new();
        let total: usize = s.iter().product();
        let mut index = vec![0; s.len()];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..s.len()).rev() {
                index[a] = rem % s[a];
                rem /= s[a];
            }
            let matches = kept.iter().enumerate().all(|(j, &a)| {
                let oi = if keep_dims { o[a] } else { o[j] };
                index[a] == oi
            });
            if matches {
                vals.push(input.data()[flat]);
            }
        }
        match mode {
            ReduceMode::Sum => vals.iter().sum(),
            ReduceMode::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            ReduceMode::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    })
}

/// Worst relative error of each kernel family against its oracle over
/// `cases` random shapes per family.
#[derive(Debug)]
pub struct OracleErrors {
    pub conv: f64,
    pub pool: f64,
    pub pool_argmax_mismatches: usize,
    pub dense: f64,
    pub reduce: f64,
}

pub fn oracle_sweep(cases: usize, seed: u64) -> OracleErrors {
    let mut r = rng(seed);
    let mut errs = OracleErrors { conv: 0.0, pool: 0.0, pool_argmax_mismatches: 0, dense: 0.0, reduce: 0.0 };
    for _ in 0..cases {
        let shape = [r.gen_range(1..5), r.gen_range(1..7), r.gen_range(1..7), r.gen_range(1..4)];
        let odd = [1, 3, 5];
        let k = [odd[r.gen_range(0..3)], odd[r.gen_range(0..3)], odd[r.gen_range(0..3)], shape[3], r.gen_range(1..4)];
        let x = uniform(&shape, &mut r);
        let kernel = uniform(&k, &mut r);
        let bias = uniform(&[k[4]], &mut r);
        let fast = tempnet::ops::conv3d(&x, &kernel, &bias).unwrap();
        errs.conv = errs.conv.max(max_rel(fast.data(), conv3d(&x, &kernel, &bias).data()));

        let window = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
        // Quantised values make ties common, exercising the tie rule.
        let q = x.map(|v| (v * 3.0).round() / 3.0);
        let (fast, fast_arg) = tempnet::ops::maxpool(&q, window).unwrap();
        let (slow, slow_arg) = maxpool(&q, window);
        errs.pool = errs.pool.max(max_rel(fast.data(), slow.data()));
        errs.pool_argmax_mismatches += fast_arg.iter().zip(&slow_arg).filter(|(a, b)| a != b).count();

        let (kin, m) = (r.gen_range(1..9), r.gen_range(1..9));
        let lead: Vec<usize> = (0..r.gen_range(0..3)).map(|_| r.gen_range(1..5)).collect();
        let mut in_shape = lead.clone();
        in_shape.push(kin);
        let input = uniform(&in_shape, &mut r);
        let weight = uniform(&[kin, m], &mut r);
        let b = uniform(&[m], &mut r);
        let fast = tempnet::ops::dense(&input, &weight, &b).unwrap();
        errs.dense = errs.dense.max(max_rel(fast.data(), dense(&input, &weight, &b).data()));

        let rank = r.gen_range(1..5);
        let rshape: Vec<usize> = (0..rank).map(|_| r.gen_range(1..6)).collect();
        let axes: Vec<usize> = (0..rank).filter(|_| r.gen_bool(0.5)).collect();
        let keep = r.gen_bool(0.5);
        let x = uniform(&rshape, &mut r);
        for mode in [ReduceMode::Sum, ReduceMode::Mean, ReduceMode::Max] {
            let (fast, _) = tempnet::ops::reduce(&x, &axes, mode, keep).unwrap();
            let slow = reduce(&x, &axes, mode, keep);
            assert_eq!(fast.shape(), slow.shape(), "reduce {rshape:?} over {axes:?} keep={keep}");
            errs.reduce = errs.reduce.max(max_rel(fast.data(), slow.data()));
        }
    }
    errs
}

/// Haar coefficients `[LL, LH, HL, HH]` of the block `[[a, b], [c, d]]` as
/// 2x2 matrix products `H X H^T` with `H = [[1, 1], [1, -1]] / sqrt(2)`.
pub fn haar_block(a: f64, b: f64, c: f64, d: f64) -> [f64; 4] {
    let h = [[1.0, 1.0], [1.0, -1.0]].map(|r: [f64; 2]| r.map(|v| v / 2f64.sqrt()));
    let x = [[a, b], [c, d]];
    let mut y = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    y[i][j] += h[i][k] * x[k][l] * h[j][l];
                }
            }
        }
    }
    // rows index vertical frequency, columns horizontal
    [y[0][0], y[0][1], y[1][0], y[1][1]]
}

/// Every attention coefficient over 1000 random inputs, with wide input and
/// weight ranges to push the gate into saturation.
pub fn attention_coefficients(inputs: usize) -> Vec<f64> {
    let cfg = reduced_config(true, false);
    let (net, mut params, _) = random_problem(&cfg, 46).unwrap();
    for (name, t) in params.iter_mut() {
        if name.contains("attention") {
            t.data_mut().iter_mut().for_each(|v| *v *= 20.0);
        }
    }
    let mut r = rng(47);
    let mut all = Vec::new();
    for _ in 0..inputs {
        let scale = 10f64.powf(r.gen_range(-3.0..3.0));
        let x = Tensor::from_fn(&cfg.input_shape, |_| r.gen_range(-scale..scale));
        let (_, trace) = net.predict(&params, &x).unwrap();
        assert_eq!(trace.modules.len(), cfg.spatial_blocks);
        all.extend(trace.coefficients());
    }
    all
}

/// Worst Parseval relative error and worst inverse-reconstruction absolute
/// error of the Haar transform over `frames` random frames of random even
/// extents and 1 or 3 channels.
pub fn wavelet_errors(frames: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut parseval, mut inverse) = (0.0f64, 0.0f64);
    for _ in 0..frames {
        let shape = [1, 2 * r.gen_range(1..25), 2 * r.gen_range(1..25), [1, 3][r.gen_range(0..2)]];
        let x = Tensor::<f32>::from_fn(&shape, |_| r.gen_range(-1.0..1.0));
        let y = tempnet::preproc::haar_dwt_downsample(&x).unwrap();
        let (ex, ey) = (x.sum_squares(), y.sum_squares());
        parseval = parseval.max((ex - ey).abs() / ex);
        inverse = inverse.max(tempnet::preproc::haar_dwt_inverse(&y).unwrap().max_abs_diff(&x));
    }
    (parseval, inverse)
}

/// A small network and input size used by the end-to-end tests.
pub const TINY_CONFIG: &str = "\
target_hw_no_dwt = 20x26
channels = 2
spatial_blocks = 2
temporal_blocks = 1
batch_size = 4
epochs = 2
";

/// Render size for datasets fed to [`TINY_CONFIG`].
pub const TINY_HW: (usize, usize) = (40, 52);

/// Writes a `n`-clip dataset at [`TINY_HW`] into `dir`.
pub fn tiny_dataset(dir: &std::path::Path, n: usize, seed: u64) -> tempnet::dataset::Manifest {
    let scene = tempnet::synth::SceneConfig::scaled(TINY_HW);
    tempnet::synth::generate_dataset(dir, n, 0.5, seed, &scene, 1).unwrap()
}

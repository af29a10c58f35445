mod common;

use common::{max_rel, rng, uniform};
use rand::Rng;
use tempnet::ops::reduce::ReduceMode;
use tempnet::{Tape, Tensor, Var};

const REL: f64 = 1e-5;

#[test]
fn kernels_match_loop_oracles() {
    let e = common::oracle_sweep(120, 11);
    assert!(e.conv < REL, "conv {e:?}");
    assert!(e.pool < REL, "pool {e:?}");
    assert_eq!(e.pool_argmax_mismatches, 0, "{e:?}");
    assert!(e.dense < REL, "dense {e:?}");
    assert!(e.reduce < REL, "reduce {e:?}");
}

#[test]
fn f32_conv_tracks_f64_oracle() {
    let mut r = rng(3);
    for _ in 0..30 {
        let shape = [r.gen_range(1..5), r.gen_range(2..9), r.gen_range(2..9), r.gen_range(1..5)];
        let x = uniform(&shape, &mut r);
        let k = uniform(&[3, 3, 3, shape[3], 4], &mut r);
        let b = uniform(&[4], &mut r);
        let fast = tempnet::ops::conv3d(&x.cast::<f32>(), &k.cast::<f32>(), &b.cast::<f32>()).unwrap();
        let slow = common::conv3d(&x.cast::<f32>().cast(), &k.cast::<f32>().cast(), &b.cast::<f32>().cast());
        let fast: Vec<f64> = fast.data().iter().map(|&v| v as f64).collect();
        assert!(max_rel(&fast, slow.data()) < 1e-4);
    }
}

#[test]
fn conv_is_linear_in_input() {
    let mut r = rng(5);
    for _ in 0..20 {
        let shape = [r.gen_range(1..4), r.gen_range(1..6), r.gen_range(1..6), 2];
        let (x, y) = (uniform(&shape, &mut r), uniform(&shape, &mut r));
        let k = uniform(&[3, 3, 3, 2, 3], &mut r);
        let zero = Tensor::zeros(&[3]);
        let (a, b) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let mix = Tensor::new(shape.to_vec(), x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect()).unwrap();
        let lhs = tempnet::ops::conv3d(&mix, &k, &zero).unwrap();
        let (cx, cy) = (tempnet::ops::conv3d(&x, &k, &zero).unwrap(), tempnet::ops::conv3d(&y, &k, &zero).unwrap());
        let rhs: Vec<f64> = cx.data().iter().zip(cy.data()).map(|(u, v)| a * u + b * v).collect();
        assert!(max_rel(lhs.data(), &rhs) < 1e-12);
    }
}

#[test]
fn ceil_mode_keeps_partial_windows() {
    let x = Tensor::<f64>::from_fn(&[1, 5, 5, 1], |i| (i[1] * 5 + i[2]) as f64);
    let (out, _) = tempnet::ops::maxpool(&x, (1, 2, 2)).unwrap();
    assert_eq!(out.shape(), &[1, 3, 3, 1]);
    assert_eq!(out.data(), &[6.0, 8.0, 9.0, 16.0, 18.0, 19.0, 21.0, 23.0, 24.0]);
}

/// Sum of `out * weights` through the tape for a random weighting, so every
/// output element carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(uniform(&shape, &mut rng(seed)));
    let prod = tape.mul(out, w).unwrap();
    let axes: Vec<usize> = (0..shape.len()).collect();
    tape.reduce(prod, &axes, ReduceMode::Sum, false).unwrap()
}

/// Compares tape gradients with central differences for every parameter
/// of a one-op graph built by `build`.
fn fd_check(params: Vec<(&str, Tensor<f64>)>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let run = |ps: &[(&str, Tensor<f64>)]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|(n, t)| tape.param(*n, t.clone())).collect();
        let out = build(&mut tape, &vars);
        let loss = weighted_sum(&mut tape, out, 99);
        (tape.value(loss).data()[0], tape.backward(loss).unwrap())
    };
    let (_, grads) = run(&params);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for i in 0..params[p].1.len() {
            let mut up = params.clone();
            up[p].1.data_mut()[i] += h;
            let mut down = params.clone();
            down[p].1.data_mut()[i] -= h;
            let numeric = (run(&up).0 - run(&down).0) / (2.0 * h);
            let analytic = grads.get(params[p].0).unwrap().data()[i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut r = rng(21);
    for _ in 0..4 {
        let shape = [r.gen_range(1..4), r.gen_range(2..5), r.gen_range(2..5), 2];
        let params = vec![("x", uniform(&shape, &mut r)), ("k", uniform(&[3, 1, 3, 2, 2], &mut r)), ("b", uniform(&[2], &mut r))];
        let err = fd_check(params, |t, v| t.conv3d(v[0], v[1], v[2]).unwrap());
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn dense_and_sigmoid_backward_match_finite_differences() {
    let mut r = rng(22);
    let params = vec![("x", uniform(&[3, 5], &mut r)), ("w", uniform(&[5, 4], &mut r)), ("b", uniform(&[4], &mut r))];
    let err = fd_check(params, |t, v| {
        let d = t.dense(v[0], v[1], v[2]).unwrap();
        t.sigmoid(d)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn pool_relu_reduce_backward_match_finite_differences() {
    let mut r = rng(23);
    // distinct values keep the argmax away from ties and ReLU away from 0
    let mut x = Tensor::from_fn(&[3, 4, 5, 2], |i| (i[0] * 40 + i[1] * 10 + i[2] * 2 + i[3]) as f64 * 0.013 - 0.7);
    for v in x.data_mut() {
        *v += r.gen_range(-0.002..0.002);
    }
    let err = fd_check(vec![("x", x.clone())], |t, v| t.maxpool(v[0], (2, 2, 2)).unwrap());
    assert!(err < 1e-6, "pool {err}");
    let err = fd_check(vec![("x", x.clone())], |t, v| t.relu(v[0]));
    assert!(err < 1e-6, "relu {err}");
    for mode in [ReduceMode::Sum, ReduceMode::Mean, ReduceMode::Max] {
        let err = fd_check(vec![("x", x.clone())], |t, v| t.reduce(v[0], &[1, 2], mode, true).unwrap());
        assert!(err < 1e-6, "{mode:?} {err}");
    }
}

#[test]
fn broadcast_mul_backward_matches_finite_differences() {
    let mut r = rng(24);
    let params = vec![("x", uniform(&[4, 3, 2, 2], &mut r)), ("m", uniform(&[4, 1, 1, 1], &mut r))];
    let err = fd_check(params, |t, v| t.broadcast_mul(v[0], v[1]).unwrap());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn bce_backward_matches_finite_differences() {
    let p = Tensor::new(vec![3], vec![0.2, 0.7, 0.95]).unwrap();
    let labels = Tensor::new(vec![3], vec![1.0, 0.0, 1.0]).unwrap();
    let err = fd_check(vec![("p", p)], |t, v| {
        let y = t.constant(labels.clone());
        t.bce_loss(v[0], y).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}
